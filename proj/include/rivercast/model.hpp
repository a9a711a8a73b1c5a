#pragma once

#include "rivercast/ssm.hpp"

namespace rivercast {

struct ModelConfig {
  int T = 4;  // hindcast steps
  int L = 7;  // lead times
  int K = 32;
  int K_hres = 16;
  int embed_era5 = 16;
  int embed_glofas = 12;
  int embed_cpc = 4;
  std::vector<int> hindcast_depths = {1, 1, 1};
  int d_state = 8;
  int d_conv = 4;
  int mlp_hidden = 64;
  int head_hidden = 32;
  double dropout = 0.0;
  double head_dropout = 0.0;
  double loan_eps = 1e-5;
  bool combine_mean = true;  // (y_f + y_b)/2; false adds them up
  int v_e = kVe;
  int v_g = kVg;
  int v_h = kVh;
  int v_s = kVs;

  int forecast_width() const { return K + K_hres; }
  int hindcast_blocks() const {
    int n = 0;
    for (int d : hindcast_depths) n += d;
    return n;
  }

  void validate() const {
    require(embed_era5 + embed_glofas + embed_cpc == K, "model config: per-source embedding widths must sum to K");
    require(!hindcast_depths.empty(), "model config: need at least one hindcast layer");
    int t = T;
    for (std::size_t i = 1; i < hindcast_depths.size(); ++i) {
      require(t % 2 == 0, "model config: T is not halvable across the hindcast layers");
      t /= 2;
    }
    require(t == 1, "model config: T must reach exactly 1 at the last hindcast layer");
    require(L >= 1 && K >= 1 && K_hres >= 1 && d_state >= 1 && d_conv >= 1, "model config: bad dimensions");
  }
};

struct RegressionHead {
  Tensor w_self, b_self;
  Tensor w_others, b_others;  // undefined when L == 1
  Tensor w_final, b_final;
};

struct Model {
  ModelConfig cfg;
  ParamStore params;
  Tensor w_era5, b_era5, w_glofas, b_glofas, w_cpc, b_cpc;
  Tensor emb_gamma, emb_beta;
  std::vector<BlockParams> hindcast;
  std::vector<Tensor> down_w, down_b;  // temporal halving maps, one per later layer
  std::vector<BlockParams> forecast;
  std::vector<Tensor> hres_w, hres_b;  // per-lead forcing projections
  std::vector<RegressionHead> heads;

  BlockSettings block_settings(bool head_pass = false) const {
    BlockSettings st;
    st.d_conv = cfg.d_conv;
    st.dropout = head_pass ? cfg.head_dropout : cfg.dropout;
    st.loan_eps = cfg.loan_eps;
    st.combine_mean = cfg.combine_mean;
    return st;
  }
};

inline Model make_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  Rng rng(seed);
  ParamStore& ps = m.params;
  m.w_era5 = ps.create("embed.era5.w", init_linear_weight(cfg.v_e, cfg.embed_era5, rng));
  m.b_era5 = ps.create("embed.era5.b", Tensor::zeros({cfg.embed_era5}));
  m.w_glofas = ps.create("embed.glofas.w", init_linear_weight(cfg.v_g, cfg.embed_glofas, rng));
  m.b_glofas = ps.create("embed.glofas.b", Tensor::zeros({cfg.embed_glofas}));
  m.w_cpc = ps.create("embed.cpc.w", init_linear_weight(1, cfg.embed_cpc, rng));
  m.b_cpc = ps.create("embed.cpc.b", Tensor::zeros({cfg.embed_cpc}));
  Tensor gamma = Tensor::zeros({cfg.K});
  for (int k = 0; k < cfg.K; ++k) gamma[std::size_t(k)] = 1.0;
  m.emb_gamma = ps.create("embed.ln.g", gamma);
  m.emb_beta = ps.create("embed.ln.b", Tensor::zeros({cfg.K}));

  for (int b = 0; b < cfg.hindcast_blocks(); ++b)
    m.hindcast.push_back(make_block_params(ps, "hind." + std::to_string(b), cfg.K, cfg.v_s, cfg.d_state, cfg.d_conv,
                                           cfg.mlp_hidden, rng));
  for (std::size_t li = 1; li < cfg.hindcast_depths.size(); ++li) {
    m.down_w.push_back(ps.create("down." + std::to_string(li) + ".w", init_linear_weight(2 * cfg.K, cfg.K, rng)));
    m.down_b.push_back(ps.create("down." + std::to_string(li) + ".b", init_linear_bias(2 * cfg.K, cfg.K, rng)));
  }

  int fw = cfg.forecast_width();
  for (int l = 0; l < cfg.L; ++l) {
    m.forecast.push_back(make_block_params(ps, "fore." + std::to_string(l), fw, cfg.v_s, cfg.d_state, cfg.d_conv,
                                           cfg.mlp_hidden, rng));
    m.hres_w.push_back(ps.create("hres." + std::to_string(l) + ".w", init_linear_weight(cfg.v_h, cfg.K_hres, rng)));
    m.hres_b.push_back(ps.create("hres." + std::to_string(l) + ".b", init_linear_bias(cfg.v_h, cfg.K_hres, rng)));
  }

  for (int l = 0; l < cfg.L; ++l) {
    RegressionHead h;
    std::string p = "head." + std::to_string(l);
    h.w_self = ps.create(p + ".self.w", init_linear_weight(fw, cfg.head_hidden, rng));
    h.b_self = ps.create(p + ".self.b", init_linear_bias(fw, cfg.head_hidden, rng));
    int joint = cfg.head_hidden;
    if (cfg.L > 1) {
      h.w_others = ps.create(p + ".others.w", init_linear_weight((cfg.L - 1) * fw, cfg.head_hidden, rng));
      h.b_others = ps.create(p + ".others.b", init_linear_bias((cfg.L - 1) * fw, cfg.head_hidden, rng));
      joint = 2 * cfg.head_hidden;
    }
    // small output init keeps the initial forecast near the persistence point
    Tensor wf = Tensor::zeros({joint, 1});
    for (std::size_t i = 0; i < wf.numel(); ++i) wf[i] = 0.01 * rng.uniform(-1.0, 1.0);
    h.w_final = ps.create(p + ".final.w", wf);
    h.b_final = ps.create(p + ".final.b", Tensor::zeros({1}));
    m.heads.push_back(h);
  }
  return m;
}

// the four serialization orders the block cycle draws from, built once per
// point subset
struct OrderSet {
  std::map<CurveKind, SerializationOrder> orders;

  const SerializationOrder& get(CurveKind k) const {
    auto it = orders.find(k);
    require(it != orders.end(), "missing serialization order");
    return it->second;
  }
};

inline OrderSet build_orders(const PointSet& points) {
  OrderSet os;
  for (int b = 0; b < 4; ++b) {
    CurveKind k = curve_cycle(b);
    os.orders.emplace(k, serialize(points, k));
  }
  return os;
}

// normalized inputs for one forward pass
struct ForwardInputs {
  Tensor era5;                // [T,P,Ve]
  Tensor glofas;              // [T,P,Vg]
  Tensor cpc;                 // [T,P,1]
  std::vector<Tensor> hres;   // per lead, [1,P,Vh]
  Tensor static_feats;        // [P,Vs]
};

// Eq-style embedding: per-source projections, concat, Tanh, LayerNorm
inline Tensor embed_inputs(Tape& tape, const Model& m, const ForwardInputs& in) {
  require(in.era5.dim(2) == m.cfg.v_e && in.glofas.dim(2) == m.cfg.v_g && in.cpc.dim(2) == 1,
          "embed_inputs: channel width mismatch with config");
  Tensor cat = concat_last(tape, {linear(tape, in.era5, m.w_era5, m.b_era5),
                                  linear(tape, in.glofas, m.w_glofas, m.b_glofas),
                                  linear(tape, in.cpc, m.w_cpc, m.b_cpc)});
  return layer_norm(tape, tanh_op(tape, cat), m.emb_gamma, m.emb_beta);
}

// encoder over the past: halves T on entry to every layer after the first,
// cycling the serialization curve across consecutive blocks
inline Tensor hindcast_forward(Tape& tape, const Model& m, const Tensor& x_embed, const Tensor& static_feats,
                               const OrderSet& orders, bool training = false, Rng* rng = nullptr) {
  require(x_embed.dim(0) == m.cfg.T, "hindcast_forward: T mismatch");
  Tensor x = x_embed;
  BlockSettings st = m.block_settings();
  int block = 0;
  for (std::size_t li = 0; li < m.cfg.hindcast_depths.size(); ++li) {
    if (li > 0) x = linear(tape, stack_time_pairs(tape, x), m.down_w[li - 1], m.down_b[li - 1]);
    for (int d = 0; d < m.cfg.hindcast_depths[li]; ++d, ++block)
      x = mamba_block(tape, x, static_feats, orders.get(curve_cycle(block)), m.hindcast[std::size_t(block)], st,
                      training, rng);
  }
  require(x.dim(0) == 1, "hindcast_forward: temporal axis did not reduce to 1");
  return x;
}

// forecast chain: block l consumes the carried K channels and this lead's
// projected forcing; emits the full per-lead features
inline std::vector<Tensor> forecast_forward(Tape& tape, const Model& m, const Tensor& x_hindcast,
                                            const ForwardInputs& in, const OrderSet& orders, bool training = false,
                                            Rng* rng = nullptr) {
  require(int(in.hres.size()) == m.cfg.L, "forecast_forward: need one forcing tensor per lead");
  BlockSettings st = m.block_settings();
  std::vector<Tensor> features;
  Tensor carry = x_hindcast;  // [1,P,K]
  for (int l = 0; l < m.cfg.L; ++l) {
    Tensor forcing = linear(tape, in.hres[std::size_t(l)], m.hres_w[std::size_t(l)], m.hres_b[std::size_t(l)]);
    Tensor block_in = concat_last(tape, {carry, forcing});
    Tensor out = mamba_block(tape, block_in, in.static_feats, orders.get(curve_cycle(l)), m.forecast[std::size_t(l)],
                             st, training, rng);
    features.push_back(out);
    if (l + 1 < m.cfg.L) carry = split_last(tape, out, {m.cfg.K, m.cfg.K_hres})[0];
  }
  return features;
}

// per-lead heads over own-lead and cross-lead features
inline Tensor regression_heads(Tape& tape, const Model& m, const std::vector<Tensor>& features, bool training = false,
                               Rng* rng = nullptr) {
  require(int(features.size()) == m.cfg.L, "regression_heads: feature count mismatch");
  int P = features[0].dim(1);
  std::vector<Tensor> deltas;
  for (int l = 0; l < m.cfg.L; ++l) {
    const RegressionHead& h = m.heads[std::size_t(l)];
    Tensor a = linear(tape, features[std::size_t(l)], h.w_self, h.b_self);
    Tensor joint;
    if (m.cfg.L > 1) {
      std::vector<Tensor> rest;
      for (int o = 0; o < m.cfg.L; ++o)
        if (o != l) rest.push_back(features[std::size_t(o)]);
      Tensor b = linear(tape, concat_last(tape, rest), h.w_others, h.b_others);
      joint = concat_last(tape, {a, b});
    } else {
      joint = a;
    }
    Tensor hidden = relu(tape, joint);
    if (m.cfg.head_dropout > 0 && training && rng) hidden = dropout(tape, hidden, m.cfg.head_dropout, training, *rng);
    Tensor d = linear(tape, hidden, h.w_final, h.b_final);  // [1,P,1]
    deltas.push_back(reshape(tape, d, {1, P}));
  }
  return concat_first(tape, deltas);  // [L,P]
}

// full network: transformed-space discharge deltas per lead and point
inline Tensor model_forward(Tape& tape, const Model& m, const ForwardInputs& in, const OrderSet& orders,
                            bool training = false, Rng* rng = nullptr) {
  Tensor x = embed_inputs(tape, m, in);
  Tensor hind = hindcast_forward(tape, m, x, in.static_feats, orders, training, rng);
  std::vector<Tensor> features = forecast_forward(tape, m, hind, in, orders, training, rng);
  return regression_heads(tape, m, features, training, rng);
}

// sign-log inverse plus the nonnegativity clamp:
//   forecast = max(0, x_prev + sign(y) (e^|y| - 1))
inline std::vector<double> reconstruct_discharge(const std::vector<double>& delta_transformed,
                                                 const std::vector<double>& x_prev) {
  std::size_t p_count = x_prev.size();
  require(p_count > 0 && delta_transformed.size() % p_count == 0, "reconstruct_discharge: shape mismatch");
  std::vector<double> out(delta_transformed.size());
  for (std::size_t i = 0; i < delta_transformed.size(); ++i) {
    double y = delta_transformed[i];
    double delta = (y >= 0 ? 1.0 : -1.0) * std::expm1(std::abs(y));
    out[i] = std::max(0.0, x_prev[i % p_count] + delta);
  }
  return out;
}

}  // namespace rivercast
