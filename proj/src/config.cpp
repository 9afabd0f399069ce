// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "geomanifold/error.hpp"

namespace gm {

void Ablations::enable(const std::string& name) {
  if (name == "disable_rvae_manifold") disable_rvae_manifold = true;
  else if (name == "disable_geo_transformer") disable_geo_transformer = true;
  else if (name == "disable_dynamics") disable_dynamics = true;
  else if (name == "disable_geo_attention") disable_geo_attention = true;
  else if (name == "disable_procrustes") disable_procrustes = true;
  else throw UsageError("unknown ablation '" + name + "'");
}

std::vector<std::string> Ablations::active() const {
  std::vector<std::string> out;
  if (disable_rvae_manifold) out.push_back("disable_rvae_manifold");
  if (disable_geo_transformer) out.push_back("disable_geo_transformer");
  if (disable_dynamics) out.push_back("disable_dynamics");
  if (disable_geo_attention) out.push_back("disable_geo_attention");
  if (disable_procrustes) out.push_back("disable_procrustes");
  return out;
}

void TrainConfig::finalize() {
  vae.manifold.dim = vae.latent_dim;
  if (ablate.disable_rvae_manifold) vae.use_manifold = false;
  if (ablate.disable_geo_attention) attn.geo_weight = 0.0;
  loss.gamma = vae.kl_weight;
  validate();
}

void TrainConfig::validate() const {
  vae.validate();
  attn.validate();
  moe.validate();
  dyn.validate();
  loss.validate();
  if (train.lr <= 0) throw UsageError("train.lr must be > 0");
  if (train.batch_size == 0) throw UsageError("train.batch_size must be >= 1");
  if (train.weight_decay < 0) throw UsageError("train.weight_decay must be >= 0");
  if (train.epochs_pretrain == 0 || train.epochs_transformer == 0 || train.epochs_finetune == 0)
    throw UsageError("every training stage needs at least one epoch");
  if (!(train.augment_scale >= 0 && train.augment_scale < 1))
    throw UsageError("train.augment_scale must be in [0, 1)");
  if (eval.folds < 2) throw UsageError("eval.folds must be >= 2");
}

namespace {

struct Field {
  std::string key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw UsageError("empty list entry in '" + s + "'");
    out.push_back(item);
  }
  return out;
}

template <class T>
T parse_int(const std::string& s) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw UsageError("expected an integer, got '" + s + "'");
  return v;
}

double parse_double(const std::string& s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw UsageError("expected a number, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw UsageError("expected true or false, got '" + s + "'");
}

template <class M>
Field size_field(std::string key, M member) {
  return {key, [member](TrainConfig& c, const std::string& v) { member(c) = parse_int<std::size_t>(v); },
          [member](const TrainConfig& c) { return std::to_string(member(const_cast<TrainConfig&>(c))); }};
}

template <class M>
Field double_field(std::string key, M member) {
  return {key, [member](TrainConfig& c, const std::string& v) { member(c) = parse_double(v); },
          [member](const TrainConfig& c) { return fmt_double(member(const_cast<TrainConfig&>(c))); }};
}

template <class M>
Field float_field(std::string key, M member) {
  return {key,
          [member](TrainConfig& c, const std::string& v) {
            member(c) = static_cast<float>(parse_double(v));
          },
          [member](const TrainConfig& c) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(member(const_cast<TrainConfig&>(c))));
            return std::string(buf);
          }};
}

template <class M>
Field bool_field(std::string key, M member) {
  return {key, [member](TrainConfig& c, const std::string& v) { member(c) = parse_bool(v); },
          [member](const TrainConfig& c) {
            return std::string(member(const_cast<TrainConfig&>(c)) ? "true" : "false");
          }};
}

template <class M>
Field list_field(std::string key, M member) {
  return {key,
          [member](TrainConfig& c, const std::string& v) {
            std::vector<std::size_t> out;
            for (const auto& s : split_list(v)) out.push_back(parse_int<std::size_t>(s));
            member(c) = out;
          },
          [member](const TrainConfig& c) {
            std::string s;
            for (auto w : member(const_cast<TrainConfig&>(c))) s += (s.empty() ? "" : ", ") + std::to_string(w);
            return s;
          }};
}

#define FIELD(kind, key, expr) kind##_field(key, [](TrainConfig& c) -> decltype(auto) { return (expr); })

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    v.push_back({"seed", [](TrainConfig& c, const std::string& s) { c.seed = parse_int<std::uint64_t>(s); },
                 [](const TrainConfig& c) { return std::to_string(c.seed); }});
    v.push_back(FIELD(size, "gen.n_subjects", c.gen.n_subjects));
    v.push_back(FIELD(size, "gen.n_classes", c.gen.n_classes));
    v.push_back(FIELD(size, "gen.segments_per_class", c.gen.segments_per_class));
    v.push_back(FIELD(size, "gen.n_channels", c.gen.n_channels));
    v.push_back(FIELD(size, "gen.latent_dim", c.gen.latent_dim));
    v.push_back(FIELD(double, "gen.duration_s", c.gen.duration_s));
    v.push_back(FIELD(double, "gen.rate_hz", c.gen.rate_hz));
    v.push_back(FIELD(double, "gen.noise_std", c.gen.noise_std));
    v.push_back(FIELD(double, "gen.base_rate_hz", c.gen.base_rate_hz));
    v.push_back(FIELD(double, "gen.subject_spread", c.gen.subject_spread));

    v.push_back(FIELD(float, "prep.rate_hz", c.prep.rate_hz));
    v.push_back(FIELD(float, "prep.low_hz", c.prep.filter.low_hz));
    v.push_back(FIELD(float, "prep.high_hz", c.prep.filter.high_hz));
    v.push_back({"prep.order",
                 [](TrainConfig& c, const std::string& s) { c.prep.filter.order = parse_int<int>(s); },
                 [](const TrainConfig& c) { return std::to_string(c.prep.filter.order); }});
    v.push_back(FIELD(float, "prep.window_s", c.prep.window_s));

    v.push_back(FIELD(size, "vae.latent_dim", c.vae.latent_dim));
    v.push_back({"vae.manifold",
                 [](TrainConfig& c, const std::string& s) { c.vae.manifold.type = manifold_type_from_string(s); },
                 [](const TrainConfig& c) { return std::string(to_string(c.vae.manifold.type)); }});
    v.push_back(FIELD(double, "vae.boundary_margin", c.vae.manifold.boundary_margin));
    v.push_back(FIELD(bool, "vae.use_manifold", c.vae.use_manifold));
    v.push_back(FIELD(list, "vae.hidden", c.vae.hidden));
    v.push_back(FIELD(double, "vae.kl_weight", c.vae.kl_weight));
    v.push_back(FIELD(size, "vae.patch_len", c.vae.patch_len));

    v.push_back(FIELD(size, "attn.n_layers", c.attn.n_layers));
    v.push_back(FIELD(size, "attn.model_dim", c.attn.model_dim));
    v.push_back(FIELD(size, "attn.n_heads", c.attn.n_heads));
    v.push_back(FIELD(double, "attn.geo_weight", c.attn.geo_weight));

    v.push_back(FIELD(size, "moe.n_experts", c.moe.n_experts));
    v.push_back({"moe.kinds",
                 [](TrainConfig& c, const std::string& s) {
                   c.moe.kinds.clear();
                   for (const auto& k : split_list(s)) c.moe.kinds.push_back(expert_kind_from_string(k));
                 },
                 [](const TrainConfig& c) {
                   std::string s;
                   for (auto k : c.moe.kinds) s += (s.empty() ? "" : ", ") + std::string(to_string(k));
                   return s;
                 }});
    v.push_back(FIELD(size, "moe.hidden_dim", c.moe.hidden_dim));
    v.push_back(FIELD(size, "moe.top_k", c.moe.top_k));

    v.push_back(FIELD(list, "dyn.field_hidden", c.dyn.field_hidden));
    v.push_back(FIELD(size, "dyn.fourier_features", c.dyn.fourier_features));
    v.push_back(FIELD(double, "dyn.fourier_base_hz", c.dyn.fourier_base_hz));
    v.push_back(FIELD(size, "dyn.causal_layers", c.dyn.causal_layers));
    v.push_back(FIELD(double, "solver.rtol", c.dyn.solver.rtol));
    v.push_back(FIELD(double, "solver.atol", c.dyn.solver.atol));
    v.push_back(FIELD(double, "solver.h0", c.dyn.solver.h0));
    v.push_back(FIELD(size, "solver.max_steps", c.dyn.solver.max_steps));
    v.push_back(FIELD(double, "solver.safety", c.dyn.solver.safety));
    v.push_back(FIELD(double, "solver.fixed_step", c.dyn.solver.fixed_step));

    v.push_back(FIELD(double, "loss.alpha", c.loss.alpha));
    v.push_back(FIELD(double, "loss.beta", c.loss.beta));
    v.push_back(FIELD(double, "loss.tau", c.loss.tau));
    v.push_back(FIELD(double, "loss.geo_target", c.loss.geo_target));

    v.push_back(FIELD(size, "train.epochs_pretrain", c.train.epochs_pretrain));
    v.push_back(FIELD(size, "train.epochs_transformer", c.train.epochs_transformer));
    v.push_back(FIELD(size, "train.epochs_finetune", c.train.epochs_finetune));
    v.push_back(FIELD(double, "train.lr", c.train.lr));
    v.push_back(FIELD(size, "train.batch_size", c.train.batch_size));
    v.push_back(FIELD(double, "train.weight_decay", c.train.weight_decay));
    v.push_back(FIELD(double, "train.augment_scale", c.train.augment_scale));
    v.push_back(FIELD(double, "train.augment_noise", c.train.augment_noise));

    v.push_back(FIELD(size, "eval.folds", c.eval.folds));
    v.push_back(FIELD(size, "eval.calibration_segments", c.eval.calibration_segments));

    v.push_back(FIELD(bool, "ablate.disable_rvae_manifold", c.ablate.disable_rvae_manifold));
    v.push_back(FIELD(bool, "ablate.disable_geo_transformer", c.ablate.disable_geo_transformer));
    v.push_back(FIELD(bool, "ablate.disable_dynamics", c.ablate.disable_dynamics));
    v.push_back(FIELD(bool, "ablate.disable_geo_attention", c.ablate.disable_geo_attention));
    v.push_back(FIELD(bool, "ablate.disable_procrustes", c.ablate.disable_procrustes));

    v.push_back(FIELD(size, "shape.n_channels", c.shape.n_channels));
    v.push_back(FIELD(size, "shape.n_samples", c.shape.n_samples));
    v.push_back(FIELD(size, "shape.n_classes", c.shape.n_classes));
    v.push_back(FIELD(double, "shape.rate_hz", c.shape.rate_hz));
    return v;
  }();
  return f;
}

#undef FIELD

}  // namespace

TrainConfig parse_config(const std::string& text) {
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;
  TrainConfig cfg;
  std::set<std::string> seen;
  std::stringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw UsageError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw UsageError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw UsageError(where + "duplicate key '" + key + "'");
    try {
      it->second->set(cfg, value);
    } catch (const Error& e) {
      throw UsageError(where + key + ": " + e.what());
    }
  }
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace gm
