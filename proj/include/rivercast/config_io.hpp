#pragma once

#include <json.hpp>

#include "rivercast/training.hpp"

namespace rivercast {

using nlohmann::json;

inline void reject_unknown_keys(const json& j, const std::vector<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      fail("unknown config key '" + it.key() + "' in " + where);
  }
}

inline json model_config_to_json(const ModelConfig& c) {
  return json{{"T", c.T},
              {"L", c.L},
              {"K", c.K},
              {"K_hres", c.K_hres},
              {"embed_era5", c.embed_era5},
              {"embed_glofas", c.embed_glofas},
              {"embed_cpc", c.embed_cpc},
              {"hindcast_depths", c.hindcast_depths},
              {"d_state", c.d_state},
              {"d_conv", c.d_conv},
              {"mlp_hidden", c.mlp_hidden},
              {"head_hidden", c.head_hidden},
              {"dropout", c.dropout},
              {"head_dropout", c.head_dropout},
              {"combine_mean", c.combine_mean}};
}

inline ModelConfig model_config_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"T", "L", "K", "K_hres", "embed_era5", "embed_glofas", "embed_cpc", "hindcast_depths",
                       "d_state", "d_conv", "mlp_hidden", "head_hidden", "dropout", "head_dropout", "combine_mean"},
                      "model");
  ModelConfig c;
  c.T = j.value("T", c.T);
  c.L = j.value("L", c.L);
  c.K = j.value("K", c.K);
  c.K_hres = j.value("K_hres", c.K_hres);
  c.embed_era5 = j.value("embed_era5", c.embed_era5);
  c.embed_glofas = j.value("embed_glofas", c.embed_glofas);
  c.embed_cpc = j.value("embed_cpc", c.embed_cpc);
  c.hindcast_depths = j.value("hindcast_depths", c.hindcast_depths);
  c.d_state = j.value("d_state", c.d_state);
  c.d_conv = j.value("d_conv", c.d_conv);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.dropout = j.value("dropout", c.dropout);
  c.head_dropout = j.value("head_dropout", c.head_dropout);
  c.combine_mean = j.value("combine_mean", c.combine_mean);
  c.validate();
  return c;
}

inline json fit_config_to_json(const FitConfig& c) {
  return json{{"epochs", c.epochs},
              {"warmup_epochs", c.warmup_epochs},
              {"lr", c.lr},
              {"min_lr", c.min_lr},
              {"weight_decay", c.weight_decay},
              {"grad_clip", c.grad_clip},
              {"steps_per_epoch", c.steps_per_epoch},
              {"segment_max_len", c.segment_max_len},
              {"loss_eval_stride", c.loss_eval_stride},
              {"compute_threads", c.compute_threads},
              {"alpha", c.alpha}};
}

inline FitConfig fit_config_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"epochs", "warmup_epochs", "lr", "min_lr", "weight_decay", "grad_clip", "steps_per_epoch",
                       "segment_max_len", "loss_eval_stride", "compute_threads", "alpha"},
                      "optimizer");
  FitConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.lr = j.value("lr", c.lr);
  c.min_lr = j.value("min_lr", c.min_lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  c.segment_max_len = j.value("segment_max_len", c.segment_max_len);
  c.loss_eval_stride = j.value("loss_eval_stride", c.loss_eval_stride);
  c.compute_threads = j.value("compute_threads", c.compute_threads);
  c.alpha = j.value("alpha", c.alpha);
  return c;
}

inline json channel_stats_to_json(const ChannelStats& s) {
  return json{{"mean", s.mean}, {"sd", s.sd}, {"constant", s.constant}};
}

inline ChannelStats channel_stats_from_json(const json& j) {
  ChannelStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.sd = j.at("sd").get<std::vector<double>>();
  s.constant = j.at("constant").get<std::vector<std::uint8_t>>();
  return s;
}

inline json norm_stats_to_json(const NormStats& s) {
  return json{{"era5", channel_stats_to_json(s.era5)},
              {"glofas", channel_stats_to_json(s.glofas)},
              {"cpc", channel_stats_to_json(s.cpc)},
              {"hres", channel_stats_to_json(s.hres)},
              {"static", channel_stats_to_json(s.static_attrs)}};
}

inline NormStats norm_stats_from_json(const json& j) {
  NormStats s;
  s.era5 = channel_stats_from_json(j.at("era5"));
  s.glofas = channel_stats_from_json(j.at("glofas"));
  s.cpc = channel_stats_from_json(j.at("cpc"));
  s.hres = channel_stats_from_json(j.at("hres"));
  s.static_attrs = channel_stats_from_json(j.at("static"));
  return s;
}

// ---------------------------------------------------------------------------
// checkpoint: <prefix>.rsnn parameters plus <prefix>.json sidecar with the
// model config and normalization statistics
// ---------------------------------------------------------------------------
inline void save_checkpoint(const Model& model, const NormStats& stats, const std::string& prefix) {
  model.params.save(prefix + ".rsnn");
  json sidecar{{"model", model_config_to_json(model.cfg)}, {"norm_stats", norm_stats_to_json(stats)}};
  std::ofstream f(prefix + ".json");
  require(f.good(), "cannot open for writing: " + prefix + ".json");
  f << sidecar.dump(2) << "\n";
}

inline std::pair<Model, NormStats> load_checkpoint(const std::string& prefix) {
  std::ifstream f(prefix + ".json");
  require(f.good(), "cannot open for reading: " + prefix + ".json");
  json sidecar = json::parse(f);
  ModelConfig cfg = model_config_from_json(sidecar.at("model"));
  NormStats stats = norm_stats_from_json(sidecar.at("norm_stats"));
  Model model = make_model(cfg, 0);
  model.params.load(prefix + ".rsnn");
  return {std::move(model), std::move(stats)};
}

}  // namespace rivercast
