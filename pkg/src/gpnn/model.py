"""Pointer-ranked non-local aggregation model plus MLP / GCN baselines.

Per node the forward pass embeds features with one GCN propagation, encodes
the node's multi-hop sequence with a recurrent cell, selects the top-m
relevant positions step by step with additive attention over the encoder
states (a pointer decoder), extracts features from the ranked selection
with a 1-D convolution plus pooling, and classifies the concatenation of
ego projection, GCN embedding and pooled non-local features.

Hard selection keeps the argmax index but emits the chosen embedding scaled
by its softmax probability, so the attention parameters stay trainable;
"soft" mode emits the full probability-weighted mixture instead.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ValidationError


@dataclass
class PointerOutput:
    """Ranked selection per node: positions refer to the input sequence;
    -1 marks slots past the number of available candidates."""

    selected_indices: np.ndarray     # (N, m) int64, -1 sentinel
    selected_probs: np.ndarray       # (N, m) float64, 0 for sentinel slots
    ranked_embeddings: ad.Value      # (N, m, d)

    @property
    def valid(self):
        return self.selected_indices >= 0


def glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return ad.parameter(rng.uniform(-limit, limit, size=shape))


def _cell_weight_shape(in_dim, hidden, cell_type):
    gates = 1 if cell_type == "tanh_cell" else 4
    return (hidden + in_dim, gates * hidden)


def init_gpnn_params(num_features, num_classes, cfg, rng):
    """Fresh parameter dict; draw order is fixed so equal seeds give equal
    initializations."""
    d = h = cfg.hidden
    dc = cfg.resolved_conv_channels()
    d0 = cfg.resolved_ego_dim()
    params = {}
    params["gcn_weight"] = glorot(rng, (num_features, d), num_features, d)
    enc_shape = _cell_weight_shape(d, h, cfg.cell_type)
    params["encoder_weight"] = glorot(rng, enc_shape, enc_shape[0], h)
    dec_shape = _cell_weight_shape(d, h, cfg.cell_type)
    params["decoder_weight"] = glorot(rng, dec_shape, dec_shape[0], h)
    if cfg.cell_type == "lstm_cell":
        params["encoder_bias"] = ad.parameter(np.zeros(enc_shape[1]))
        params["decoder_bias"] = ad.parameter(np.zeros(dec_shape[1]))
    params["attn_w1"] = glorot(rng, (h, h), h, h)
    params["attn_w2"] = glorot(rng, (h, h), h, h)
    params["attn_v"] = glorot(rng, (h,), h, 1)
    params["start_token"] = glorot(rng, (d,), d, 1)
    params["conv_filters"] = glorot(rng, (cfg.conv_width, d, dc), cfg.conv_width * d, dc)
    params["conv_bias"] = ad.parameter(np.zeros(dc))
    params["ego_weight"] = glorot(rng, (num_features, d0), num_features, d0)
    params["ffn_weight"] = glorot(rng, (d0 + d + dc, num_classes), d0 + d + dc, num_classes)
    params["ffn_bias"] = ad.parameter(np.zeros(num_classes))
    return params


def init_mlp_params(num_features, num_classes, cfg, rng):
    h = cfg.hidden
    return {
        "w1": glorot(rng, (num_features, h), num_features, h),
        "b1": ad.parameter(np.zeros(h)),
        "w2": glorot(rng, (h, num_classes), h, num_classes),
        "b2": ad.parameter(np.zeros(num_classes)),
    }


def init_gcn_params(num_features, num_classes, cfg, rng, layers=2):
    dims = [num_features] + [cfg.hidden] * (layers - 1) + [num_classes]
    return {
        f"w{i}": glorot(rng, (dims[i], dims[i + 1]), dims[i], dims[i + 1])
        for i in range(layers)
    }


def init_stacked_gpnn_params(num_features, num_classes, cfg, rng, layers):
    """One parameter dict per stacked layer. Layer l > 0 consumes the
    previous layer's combined representation projected back to d, so its
    feature dimension is d; only the last layer carries the classifier."""
    d = cfg.hidden
    dc = cfg.resolved_conv_channels()
    d0 = cfg.resolved_ego_dim()
    per_layer = []
    in_dim = num_features
    for layer in range(layers):
        p = init_gpnn_params(in_dim, num_classes, cfg, rng)
        if layer < layers - 1:
            del p["ffn_weight"], p["ffn_bias"]
            p["proj"] = glorot(rng, (d0 + d + dc, d), d0 + d + dc, d)
        per_layer.append(p)
        in_dim = d
    return per_layer


def flatten_stacked_params(per_layer):
    return {f"layer{i}.{k}": v for i, p in enumerate(per_layer) for k, v in p.items()}


def unflatten_stacked_params(flat):
    per_layer = {}
    for key, value in flat.items():
        prefix, _, name = key.partition(".")
        per_layer.setdefault(int(prefix.removeprefix("layer")), {})[name] = value
    return [per_layer[i] for i in sorted(per_layer)]


def gcn_embed(x, norm_matrix, weight):
    """relu(S (x W)) for the symmetrically normalized S."""
    return ad.relu(ad.spmm(norm_matrix, ad.matmul(x, weight)))


def _cell_step(x, h_prev, c_prev, weight, bias, cell_type, hidden):
    joint = ad.concat_last_axis([h_prev, x])
    if cell_type == "tanh_cell":
        return ad.tanh(ad.matmul(joint, weight)), None
    z = ad.add(ad.matmul(joint, weight), bias)
    gate_i = ad.sigmoid(ad.slice_last_axis(z, 0, hidden))
    gate_f = ad.sigmoid(ad.slice_last_axis(z, hidden, 2 * hidden))
    cand = ad.tanh(ad.slice_last_axis(z, 2 * hidden, 3 * hidden))
    gate_o = ad.sigmoid(ad.slice_last_axis(z, 3 * hidden, 4 * hidden))
    c = ad.add(ad.mul(gate_f, c_prev), ad.mul(gate_i, cand))
    return ad.mul(gate_o, ad.tanh(c)), c


def run_encoder(xhat, batch, params, cfg):
    """Encoder states for every sequence position.

    Masked positions feed zero vectors; their states are computed but
    excluded from attention downstream via the batch mask. Returns
    (E, C) with E (N, L, h); C is None for the tanh cell.
    """
    n, length = batch.indices.shape
    h = cfg.hidden
    bias = params.get("encoder_bias")
    state = ad.constant(np.zeros((n, h)))
    cell = ad.constant(np.zeros((n, h))) if cfg.cell_type == "lstm_cell" else None
    states, cells = [], []
    for i in range(length):
        x_i = ad.gather_rows(xhat, batch.indices[:, i])
        x_i = ad.mul(x_i, ad.constant(batch.mask[:, i:i + 1].astype(np.float64)))
        state, cell = _cell_step(x_i, state, cell, params["encoder_weight"], bias,
                                 cfg.cell_type, h)
        states.append(state)
        if cell is not None:
            cells.append(cell)
    enc = ad.stack_positions(states)
    enc_cells = ad.stack_positions(cells) if cells else None
    return enc, enc_cells


def decoder_select(enc, enc_cells, xhat, batch, params, cfg, m=None):
    """Step-by-step pointer selection of the top-m sequence positions.

    Selected positions are masked out for later steps. When a row runs out
    of candidates the remaining slots emit zero vectors with probability 0
    and index -1.
    """
    m = cfg.num_selected_m if m is None else m
    if m < 1:
        raise ValidationError(f"number of selected nodes must be >= 1, got {m}")
    n, length = batch.indices.shape
    h = cfg.hidden
    soft = cfg.selection_mode == "soft"
    bias = params.get("decoder_bias")

    last = batch.lengths - 1
    d_state = ad.select_positions(enc, last)
    c_state = ad.select_positions(enc_cells, last) if enc_cells is not None else None
    x_prev = ad.add(ad.constant(np.zeros((n, cfg.hidden))), params["start_token"])

    w1e = ad.matmul(enc, params["attn_w1"])                    # (N, L, h)
    v_col = ad.reshape(params["attn_v"], (h, 1))
    seq_emb = None
    if soft:
        seq_emb = ad.mul(
            ad.gather_rows(xhat, batch.indices),
            ad.constant(batch.mask[:, :, None].astype(np.float64)),
        )

    available = batch.mask.copy()
    sel_idx = np.full((n, m), -1, dtype=np.int64)
    sel_probs = np.zeros((n, m))
    ranked = []
    for step in range(m):
        d_state, c_state = _cell_step(x_prev, d_state, c_state,
                                      params["decoder_weight"], bias,
                                      cfg.cell_type, h)
        live = available.any(axis=1)
        softmax_mask = available.copy()
        softmax_mask[~live, 0] = True        # keep dead rows well-formed; zeroed below
        dw2 = ad.matmul(d_state, params["attn_w2"])
        pre = ad.add(w1e, ad.reshape(dw2, (n, 1, h)))
        scores = ad.reshape(ad.matmul(ad.tanh(pre), v_col), (n, length))
        probs = ad.masked_softmax(scores, softmax_mask)

        chosen = probs.data.argmax(axis=1)   # ties -> lowest position index
        live_col = ad.constant(live.astype(np.float64)[:, None])
        x_sel = ad.mul(ad.gather_rows(xhat, batch.indices[np.arange(n), chosen]),
                       live_col)
        if soft:
            mix = ad.reduce_sum(ad.mul(ad.reshape(probs, (n, length, 1)), seq_emb),
                                axis=1)
            ranked.append(ad.mul(mix, live_col))
        else:
            p_sel = ad.reshape(ad.select_positions(probs, chosen), (n, 1))
            ranked.append(ad.mul(p_sel, x_sel))

        sel_idx[live, step] = chosen[live]
        sel_probs[live, step] = probs.data[np.arange(n), chosen][live]
        available[live, chosen[live]] = False
        x_prev = x_sel

    return PointerOutput(
        selected_indices=sel_idx,
        selected_probs=sel_probs,
        ranked_embeddings=ad.stack_positions(ranked),
    )


def nonlocal_aggregate(pointer, params, cfg):
    """Convolve the ranked selection and pool over its valid positions."""
    feat = ad.relu(ad.conv1d(pointer.ranked_embeddings, params["conv_filters"],
                             params["conv_bias"]))
    pool = ad.max_pool_over_positions if cfg.pool == "max" else ad.mean_pool_over_positions
    return pool(feat, pointer.valid)


def _gpnn_trunk(x, norm_matrix, batch, params, cfg, training, rng):
    x_in = ad.dropout(x, cfg.dropout, training, rng)
    xhat = gcn_embed(x_in, norm_matrix, params["gcn_weight"])
    enc, enc_cells = run_encoder(xhat, batch, params, cfg)
    pointer = decoder_select(enc, enc_cells, xhat, batch, params, cfg)
    z = nonlocal_aggregate(pointer, params, cfg)
    ego = ad.matmul(x_in, params["ego_weight"])
    combined = ad.concat_last_axis([ego, xhat, z])
    return combined, pointer


def gpnn_forward(x, norm_matrix, batch, params, cfg, training=False, rng=None,
                 return_pointer=False):
    """Full forward pass to logits (N, C); softmax lives in the loss."""
    combined, pointer = _gpnn_trunk(x, norm_matrix, batch, params, cfg, training, rng)
    combined = ad.dropout(combined, cfg.dropout, training, rng)
    logits = ad.add(ad.matmul(combined, params["ffn_weight"]), params["ffn_bias"])
    return (logits, pointer) if return_pointer else logits


def stack_gpnn_layers(x, norm_matrix, batch, params_per_layer, cfg, training=False,
                      rng=None):
    """Depth sweep variant: each layer's combined representation is linearly
    projected back to d and becomes the next layer's node features; the last
    layer feeds the classifier head."""
    features = x
    for layer, params in enumerate(params_per_layer):
        combined, _ = _gpnn_trunk(features, norm_matrix, batch, params, cfg,
                                  training, rng)
        if layer < len(params_per_layer) - 1:
            features = ad.matmul(combined, params["proj"])
        else:
            combined = ad.dropout(combined, cfg.dropout, training, rng)
            return ad.add(ad.matmul(combined, params["ffn_weight"]),
                          params["ffn_bias"])


def baseline_mlp_forward(x, params, cfg, training=False, rng=None):
    """Two-layer perceptron; ignores the graph entirely."""
    hidden = ad.relu(ad.add(ad.matmul(ad.dropout(x, cfg.dropout, training, rng),
                                      params["w1"]), params["b1"]))
    hidden = ad.dropout(hidden, cfg.dropout, training, rng)
    return ad.add(ad.matmul(hidden, params["w2"]), params["b2"])


def baseline_gcn_forward(x, norm_matrix, params, cfg, training=False, rng=None,
                         layers=2):
    """Stacked symmetric-normalized propagations with relu between layers."""
    h = x
    for layer in range(layers):
        h = ad.dropout(h, cfg.dropout, training, rng)
        h = ad.spmm(norm_matrix, ad.matmul(h, params[f"w{layer}"]))
        if layer < layers - 1:
            h = ad.relu(h)
    return h


def count_parameters(params):
    flat = flatten_stacked_params(params) if isinstance(params, list) else params
    return int(sum(p.size for p in flat.values()))


def predict(logits):
    return logits.data.argmax(axis=1)


def accuracy(logits, labels, idx):
    return float(np.mean(predict(logits)[idx] == labels[idx]))
