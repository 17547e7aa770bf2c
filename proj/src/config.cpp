#include "uau/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "uau/errors.hpp"
#include "uau/serialization.hpp"

namespace uau {

namespace {

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
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true|false, got '" + v + "'");
}

std::string fmt(double v) { return format_double(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(static_cast<std::conditional_t<std::is_floating_point_v<T>, double, std::uint64_t>>(v[i]));
  return out;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(parse_double(key, item));
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) out.push_back(parse_uint(key, item));
  return out;
}

struct KeyImpl {
  ConfigKey key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define UAU_DOUBLE(group, name, field, doc)                                                  \
  KeyImpl{{name, group, doc}, [](const ExperimentConfig& c) { return fmt(c.field); },       \
          [](ExperimentConfig& c, const std::string& v) { c.field = parse_double(name, v); }}
#define UAU_SIZE(group, name, field, doc)                                                                  \
  KeyImpl{{name, group, doc}, [](const ExperimentConfig& c) { return fmt(static_cast<std::uint64_t>(c.field)); }, \
          [](ExperimentConfig& c, const std::string& v) { c.field = parse_uint(name, v); }}

const std::vector<KeyImpl>& key_table() {
  static const std::vector<KeyImpl> table = {
      // Synthetic data.
      KeyImpl{{"au_regions", "data", "region (0 up, 1 mid, 2 low) of each AU; its length sets N"},
              [](const ExperimentConfig& c) { return fmt_list(c.data.assignment.region_of); },
              [](ExperimentConfig& c, const std::string& v) {
                c.data.assignment.region_of = parse_size_list("au_regions", v);
              }},
      UAU_SIZE("data", "train_sequences", data.train_sequences, "training sequences"),
      UAU_SIZE("data", "eval_sequences", data.eval_sequences, "held-out evaluation sequences"),
      UAU_SIZE("data", "frames_per_seq", data.frames_per_seq, "frames T per sequence"),
      KeyImpl{{"positive_rates", "data", "stationary positive rate of each AU, in (0,1)"},
              [](const ExperimentConfig& c) { return fmt_list(c.data.positive_rates); },
              [](ExperimentConfig& c, const std::string& v) {
                c.data.positive_rates = parse_double_list("positive_rates", v);
              }},
      UAU_DOUBLE("data", "co_occurrence", data.co_occurrence,
                 "weight of the shared-threshold component of the joint label law"),
      UAU_SIZE("data", "segment_length", data.segment_length, "frames per latent label segment"),
      UAU_DOUBLE("data", "segment_stay", data.segment_stay, "probability a segment repeats the previous pattern"),
      UAU_DOUBLE("data", "signal_scale", data.signal_scale, "amplitude of an active AU bump"),
      UAU_DOUBLE("data", "subject_offset_scale", data.subject_offset_scale, "std of per-sequence static offsets"),
      UAU_DOUBLE("data", "noise_scale", data.noise_scale, "std of additive per-pixel noise"),
      UAU_DOUBLE("data", "occlusion_prob", data.occlusion_prob,
                 "per segment and region probability of replacing the region by noise"),
      UAU_DOUBLE("data", "occlusion_noise", data.occlusion_noise, "std of the noise inside an occluded region"),
      UAU_SIZE("data", "channels", data.channels, "feature channels C per pyramid level"),
      KeyImpl{{"pyramid_sizes", "data", "square side of each pyramid level, finest first; last is the target grid"},
              [](const ExperimentConfig& c) { return fmt_list(c.data.pyramid_sizes); },
              [](ExperimentConfig& c, const std::string& v) {
                c.data.pyramid_sizes = parse_size_list("pyramid_sizes", v);
              }},
      KeyImpl{{"data_seed", "data", "generator seed (gen-data --seed overrides)"},
              [](const ExperimentConfig& c) { return fmt(c.data.seed); },
              [](ExperimentConfig& c, const std::string& v) { c.data.seed = parse_uint("data_seed", v); }},
      // Model.
      UAU_SIZE("model", "latent_dim", model.latent_dim, "AU feature and embedding dimension b"),
      UAU_SIZE("model", "au_kernel", model.au_kernel, "odd kernel of the per-AU convolutions"),
      UAU_SIZE("model", "temporal_window", model.temporal_window, "odd frame window of the motion aggregation"),
      UAU_SIZE("model", "gda_kernel", model.gda_kernel, "odd kernel of the directional attention convs"),
      UAU_SIZE("model", "tcn_kernel", model.tcn_kernel, "odd kernel of the per-AU temporal convolution"),
      UAU_DOUBLE("model", "adjacency_threshold", model.adjacency_threshold,
                 "ACP marginal at which a cross-region edge is added"),
      KeyImpl{{"embedding", "model", "cvae | deterministic (z = mu, no KL)"},
              [](const ExperimentConfig& c) { return std::string(to_string(c.model.embedding)); },
              [](ExperimentConfig& c, const std::string& v) { c.model.embedding = parse_embedding_kind(v); }},
      KeyImpl{{"head", "model", "evidential (evidence pairs) | point (sigmoid logits, BCE)"},
              [](const ExperimentConfig& c) { return std::string(to_string(c.model.head)); },
              [](ExperimentConfig& c, const std::string& v) { c.model.head = parse_head_kind(v); }},
      // Training.
      UAU_SIZE("train", "epochs_stage1", train.epochs_stage1, "epochs of embedding pre-training"),
      UAU_SIZE("train", "epochs_stage2", train.epochs_stage2, "epochs of joint training"),
      UAU_SIZE("train", "batch_sequences", train.batch_sequences, "sequences per optimizer step"),
      UAU_DOUBLE("train", "learning_rate", train.learning_rate, "initial Adam step size, cosine-annealed to 0"),
      UAU_DOUBLE("train", "adam_beta1", train.beta1, "first-moment decay"),
      UAU_DOUBLE("train", "adam_beta2", train.beta2, "second-moment decay"),
      UAU_DOUBLE("train", "adam_eps", train.adam_eps, "Adam denominator epsilon"),
      UAU_DOUBLE("train", "weight_decay", train.weight_decay, "decoupled weight decay"),
      KeyImpl{{"train_seed", "train", "seed of initialization, shuffling and embedding noise"},
              [](const ExperimentConfig& c) { return fmt(c.train.seed); },
              [](ExperimentConfig& c, const std::string& v) { c.train.seed = parse_uint("train_seed", v); }},
      KeyImpl{{"loss", "train", "abl | ebce per-AU evidential risk"},
              [](const ExperimentConfig& c) {
                return std::string(c.train.loss == EvidentialLoss::abl ? "abl" : "ebce");
              },
              [](ExperimentConfig& c, const std::string& v) {
                if (v == "abl") c.train.loss = EvidentialLoss::abl;
                else if (v == "ebce") c.train.loss = EvidentialLoss::ebce;
                else throw ConfigError("loss: expected abl|ebce, got '" + v + "'");
              }},
      KeyImpl{{"detach_uncertainty", "train", "treat the (1-u) frame weight as a constant in the gradient"},
              [](const ExperimentConfig& c) { return fmt(c.train.detach_uncertainty); },
              [](ExperimentConfig& c, const std::string& v) {
                c.train.detach_uncertainty = parse_bool("detach_uncertainty", v);
              }},
      KeyImpl{{"stage2_frozen", "train", "parameter-name prefixes frozen in stage 2, or none"},
              [](const ExperimentConfig& c) {
                if (c.train.stage2_frozen.empty()) return std::string("none");
                std::string out;
                for (std::size_t i = 0; i < c.train.stage2_frozen.size(); ++i)
                  out += (i ? "," : "") + c.train.stage2_frozen[i];
                return out;
              },
              [](ExperimentConfig& c, const std::string& v) {
                c.train.stage2_frozen.clear();
                if (v != "none")
                  for (const auto& p : split_list(v))
                    if (!p.empty()) c.train.stage2_frozen.push_back(p);
              }},
      // Loss.
      UAU_DOUBLE("loss", "gamma_pos", loss.gamma_pos, "focusing exponent of positives"),
      UAU_DOUBLE("loss", "gamma_neg", loss.gamma_neg, "focusing exponent of negatives (>= gamma_pos)"),
      UAU_DOUBLE("loss", "shift_c", loss.shift_c, "probability shift for negatives, in [0,1)"),
      KeyImpl{{"au_weights", "loss", "auto (inverse training frequency) | ones | comma list"},
              [](const ExperimentConfig& c) {
                if (!c.loss.au_weights.empty()) return fmt_list(c.loss.au_weights);
                return std::string(c.train.auto_au_weights ? "auto" : "ones");
              },
              [](ExperimentConfig& c, const std::string& v) {
                c.loss.au_weights.clear();
                if (v == "auto") c.train.auto_au_weights = true;
                else if (v == "ones") c.train.auto_au_weights = false;
                else {
                  c.train.auto_au_weights = false;
                  c.loss.au_weights = parse_double_list("au_weights", v);
                }
              }},
      UAU_DOUBLE("loss", "kl_weight", loss.kl_weight, "KL weight lambda1 in stage 1"),
      UAU_DOUBLE("loss", "sub_weight", loss.sub_weight, "ACP loss weight lambda2 in stage 2"),
      // Ablation.
      UAU_SIZE("ablation", "ablate_seeds", ablation.seeds, "training seeds per ablation row (>= 5)"),
      KeyImpl{{"ablate_rows", "ablation", "rows out of baseline, cvafe, ebce, abl, det_abl"},
              [](const ExperimentConfig& c) {
                std::string out;
                for (std::size_t i = 0; i < c.ablation.rows.size(); ++i) out += (i ? "," : "") + c.ablation.rows[i];
                return out;
              },
              [](ExperimentConfig& c, const std::string& v) { c.ablation.rows = split_list(v); }},
  };
  return table;
}

#undef UAU_DOUBLE
#undef UAU_SIZE

const KeyImpl& find_key(const std::string& key) {
  for (const auto& k : key_table())
    if (k.key.name == key) return k;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& k : key_table()) out.push_back(k.key);
    return out;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  find_key(key).set(cfg, value);
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) { return find_key(key).get(cfg); }

void ExperimentConfig::validate() const {
  data.validate();
  model.validate();
  model_spec(data, model).validate();
  train.validate();
  loss.validate();
  if (!loss.au_weights.empty() && loss.au_weights.size() != data.num_aus())
    throw ConfigError("au_weights: expected " + std::to_string(data.num_aus()) + " values");
  if (ablation.seeds == 0) throw ConfigError("ablate_seeds must be >= 1");
  static const std::set<std::string> rows{"baseline", "cvafe", "ebce", "abl", "det_abl"};
  if (ablation.rows.empty()) throw ConfigError("ablate_rows must name at least one row");
  for (const auto& r : ablation.rows)
    if (!rows.count(r)) throw ConfigError("ablate_rows: unknown row '" + r + "'");
}

ExperimentConfig parse_config(std::istream& is, const std::string& source) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(is, path);
}

std::string format_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  std::string group;
  for (const auto& k : key_table()) {
    if (k.key.group != group) {
      if (!group.empty()) os << '\n';
      group = k.key.group;
      os << "# " << group << '\n';
    }
    os << k.key.name << " = " << k.get(cfg) << '\n';
  }
  return os.str();
}

ModelSpec model_spec(const SyntheticConfig& data, const ModelConfig& model) {
  ModelSpec spec;
  spec.assignment = data.assignment;
  spec.channels = data.channels;
  spec.pyramid_sizes = data.pyramid_sizes;
  spec.config = model;
  return spec;
}

}  // namespace uau
