#include "uau/model.hpp"

#include <cmath>
#include <sstream>

#include "uau/beta_evidence.hpp"
#include "uau/cvae_embedding.hpp"
#include "uau/errors.hpp"
#include "uau/ops.hpp"
#include "uau/relation_graph.hpp"

namespace uau {

namespace {

constexpr const char* kModelSchema = "uaunet-model/1";

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::size_t> split_sizes(const std::string& s, const std::string& key) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoul(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("model metadata " + key + ": bad list '" + s + "'");
    }
  }
  return out;
}

const std::string& meta_at(const Metadata& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw ConfigError("model metadata: missing key '" + key + "'");
  return it->second;
}

std::size_t meta_size(const Metadata& meta, const std::string& key) {
  const auto v = split_sizes(meta_at(meta, key), key);
  if (v.size() != 1) throw ConfigError("model metadata " + key + ": expected one integer");
  return v[0];
}

std::string au_name(std::size_t n) { return "au" + std::to_string(n); }

// One-hot of each frame's ground-truth joint pattern in a region: [T, 2^n].
Tensor combo_one_hot(std::span<const int> labels, std::size_t frames, std::size_t num_aus,
                     const std::vector<std::size_t>& members) {
  Tensor out(Shape{frames, std::size_t{1} << members.size()});
  std::vector<int> bits(members.size());
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < members.size(); ++i) bits[i] = labels[t * num_aus + members[i]];
    out[t * out.dim(1) + combo_index(bits)] = 1.0;
  }
  return out;
}

}  // namespace

const char* to_string(EmbeddingKind kind) { return kind == EmbeddingKind::cvae ? "cvae" : "deterministic"; }
const char* to_string(HeadKind kind) { return kind == HeadKind::evidential ? "evidential" : "point"; }

EmbeddingKind parse_embedding_kind(const std::string& s) {
  if (s == "cvae") return EmbeddingKind::cvae;
  if (s == "deterministic") return EmbeddingKind::deterministic;
  throw ConfigError("embedding: expected cvae|deterministic, got '" + s + "'");
}

HeadKind parse_head_kind(const std::string& s) {
  if (s == "evidential") return HeadKind::evidential;
  if (s == "point") return HeadKind::point;
  throw ConfigError("head: expected evidential|point, got '" + s + "'");
}

void ModelConfig::validate() const {
  if (latent_dim == 0) throw ConfigError("latent_dim must be >= 1");
  if (au_kernel == 0 || au_kernel % 2 == 0) throw ConfigError("au_kernel must be odd");
  if (temporal_window == 0 || temporal_window % 2 == 0) throw ConfigError("temporal_window must be odd");
  if (gda_kernel == 0 || gda_kernel % 2 == 0) throw ConfigError("gda_kernel must be odd");
  if (tcn_kernel == 0 || tcn_kernel % 2 == 0) throw ConfigError("tcn_kernel must be odd");
  if (!(adjacency_threshold >= 0.0 && adjacency_threshold <= 1.0))
    throw ConfigError("adjacency_threshold must lie in [0,1]");
}

PyramidSpec ModelSpec::pyramid() const {
  PyramidSpec p;
  p.channels = channels;
  p.sizes = pyramid_sizes;
  p.window = config.temporal_window;
  p.gda_kernel = config.gda_kernel;
  return p;
}

void ModelSpec::validate() const {
  assignment.validate();
  config.validate();
  pyramid().validate();
  if (pyramid_sizes.back() < 7) throw ConfigError("pyramid target side must be >= 7");
}

Metadata spec_to_metadata(const ModelSpec& spec) {
  const ModelConfig& c = spec.config;
  return Metadata{{"schema", kModelSchema},
                  {"au_regions", join(spec.assignment.region_of)},
                  {"channels", std::to_string(spec.channels)},
                  {"pyramid_sizes", join(spec.pyramid_sizes)},
                  {"latent_dim", std::to_string(c.latent_dim)},
                  {"au_kernel", std::to_string(c.au_kernel)},
                  {"temporal_window", std::to_string(c.temporal_window)},
                  {"gda_kernel", std::to_string(c.gda_kernel)},
                  {"tcn_kernel", std::to_string(c.tcn_kernel)},
                  {"adjacency_threshold", format_double(c.adjacency_threshold)},
                  {"embedding", to_string(c.embedding)},
                  {"head", to_string(c.head)}};
}

ModelSpec spec_from_metadata(const Metadata& meta) {
  if (meta_at(meta, "schema") != kModelSchema)
    throw ConfigError("model: unsupported schema '" + meta_at(meta, "schema") + "'");
  ModelSpec spec;
  spec.assignment.region_of = split_sizes(meta_at(meta, "au_regions"), "au_regions");
  spec.channels = meta_size(meta, "channels");
  spec.pyramid_sizes = split_sizes(meta_at(meta, "pyramid_sizes"), "pyramid_sizes");
  ModelConfig& c = spec.config;
  c.latent_dim = meta_size(meta, "latent_dim");
  c.au_kernel = meta_size(meta, "au_kernel");
  c.temporal_window = meta_size(meta, "temporal_window");
  c.gda_kernel = meta_size(meta, "gda_kernel");
  c.tcn_kernel = meta_size(meta, "tcn_kernel");
  try {
    c.adjacency_threshold = std::stod(meta_at(meta, "adjacency_threshold"));
  } catch (const std::exception&) {
    throw ConfigError("model metadata adjacency_threshold: not a number");
  }
  c.embedding = parse_embedding_kind(meta_at(meta, "embedding"));
  c.head = parse_head_kind(meta_at(meta, "head"));
  spec.validate();
  return spec;
}

UAUNet::UAUNet(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  const std::size_t n = spec_.num_aus(), b = spec_.config.latent_dim;
  Rng st_rng(derive_seed(seed, {1}));
  init_spatio_temporal(params_, "st", spec_.pyramid(), st_rng);
  Rng afe_rng(derive_seed(seed, {2}));
  init_region_features(params_, "afe", spec_.assignment, spec_.channels, b, spec_.config.au_kernel, afe_rng);
  Rng emb_rng(derive_seed(seed, {3}));
  for (std::size_t au = 0; au < n; ++au) {
    const std::size_t n_sub = spec_.assignment.sub_count(spec_.assignment.region_of[au]);
    EmbeddingHeadSpec hs{b, std::size_t{1} << (n_sub - 1), b};
    init_embedding_head(params_, "cvae." + au_name(au), hs, emb_rng);
    params_.add("aux." + au_name(au) + ".w", normal_tensor({b, 2}, emb_rng, std::sqrt(1.0 / static_cast<double>(b))));
  }
  Rng graph_rng(derive_seed(seed, {4}));
  init_relation_graph(params_, "gat", b, spec_.config.tcn_kernel, graph_rng);
  Rng head_rng(derive_seed(seed, {5}));
  const std::size_t outs = spec_.config.head == HeadKind::evidential ? 2 : 1;
  for (std::size_t au = 0; au < n; ++au) {
    params_.add("head." + au_name(au) + ".w",
                normal_tensor({b, outs}, head_rng, std::sqrt(1.0 / static_cast<double>(b))));
    params_.add("head." + au_name(au) + ".b", Tensor({outs}));
  }
}

UAUNet::UAUNet(ModelSpec spec, ParameterStore params) : spec_(std::move(spec)) {
  UAUNet reference(spec_, 0);
  const auto expected = reference.params_.names();
  if (params.names() != expected) throw ConfigError("model: parameter names do not match the declared layout");
  for (const auto& name : expected)
    if (params.value(name).shape() != reference.params_.value(name).shape())
      throw ConfigError("model: parameter '" + name + "' has shape " + shape_to_string(params.value(name).shape()) +
                        ", expected " + shape_to_string(reference.params_.value(name).shape()));
  params_ = std::move(params);
}

Var UAUNet::features(Tape& tape, std::span<const Tensor> pyramid) {
  return spatio_temporal_forward(tape, params_, "st", spec_.pyramid(), pyramid);
}

ForwardResult UAUNet::forward(Tape& tape, Var features, std::span<const int> labels, ForwardMode mode, Rng* rng) {
  const AUAssignment& asg = spec_.assignment;
  const std::size_t n = spec_.num_aus(), b = spec_.config.latent_dim;
  const std::size_t frames = features.shape()[0];
  const bool sampling = spec_.config.embedding == EmbeddingKind::cvae && mode != ForwardMode::eval;
  if (mode == ForwardMode::stage1 && labels.size() != frames * n)
    throw ShapeError("UAUNet::forward: stage1 needs " + std::to_string(frames * n) + " labels, got " +
                     std::to_string(labels.size()));
  if (sampling && rng == nullptr) throw DomainError("UAUNet::forward: sampling mode needs an rng");

  const RegionSlices slices = partition_regions(features.shape()[2]);
  ForwardResult out;
  std::vector<Var> z(n);
  Tensor marginals(Shape{frames, n});
  std::vector<Var> cls_terms, kl_terms;

  for (std::size_t r = 0; r < kNumRegions; ++r) {
    const auto members = asg.members(r);
    const std::size_t n_sub = members.size();
    Var region = region_view(features, slices[r]);
    std::vector<Var> x = au_feature_extract(tape, params_, "afe", region, members);

    std::optional<Var> acp_probs;
    Var combo_onehot;
    if (mode == ForwardMode::stage1) {
      combo_onehot = tape.constant(combo_one_hot(labels, frames, n, members));
    } else {
      Var logits = acp_logits(tape, params_, "afe", r, region);
      out.acp_logits.push_back(logits);
      acp_probs = ops::softmax(logits, 1);
      const Tensor m = acp_marginals(acp_probs->value(), n_sub);
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t i = 0; i < n_sub; ++i) marginals[t * n + members[i]] = m[t * n_sub + i];
    }

    for (std::size_t i = 0; i < n_sub; ++i) {
      const std::size_t au = members[i];
      Var pattern = tape.constant(neighbour_pattern_matrix(n_sub, i));
      // The ACP distribution enters as a fixed condition; the ACP head is
      // trained by its own loss only.
      Var source = acp_probs ? tape.constant(acp_probs->value()) : combo_onehot;
      Var cond = ops::matmul(source, pattern);
      const std::string prefix = "cvae." + au_name(au);
      GaussianPosterior post = encode(tape, params_, prefix, x[i], cond);
      if (spec_.config.embedding == EmbeddingKind::cvae) {
        if (out.feature_variance.empty()) out.feature_variance.assign(frames, 0.0);
        const Tensor& sg = post.sigma.value();
        const double scale = 1.0 / static_cast<double>(n * b);
        for (std::size_t t = 0; t < frames; ++t)
          for (std::size_t k = 0; k < b; ++k) out.feature_variance[t] += sg[t * b + k] * sg[t * b + k] * scale;
      }
      if (sampling) {
        z[au] = reparameterize(post, normal_tensor(post.mu.shape(), *rng));
        if (mode == ForwardMode::stage1) kl_terms.push_back(kl_to_standard_normal(post));
      } else {
        z[au] = post.mu;
      }
      if (mode == ForwardMode::stage1) {
        std::vector<int> y(frames);
        for (std::size_t t = 0; t < frames; ++t) y[t] = labels[t * n + au];
        cls_terms.push_back(cls_loss(z[au], y, tape.parameter(params_, "aux." + au_name(au) + ".w")));
      }
    }
  }

  if (mode == ForwardMode::stage1) {
    out.cls_loss = ops::sum(ops::stack(cls_terms, 0));
    if (!kl_terms.empty()) out.kl = ops::sum(ops::stack(kl_terms, 0));
    return out;
  }

  Var v = ops::stack(z, 1);  // [T, N, b]
  const Tensor mask = build_adjacency_frames(marginals, asg, spec_.config.adjacency_threshold);
  Var related = gat_layer(tape, params_, "gat", v, mask);
  Var smoothed = temporal_aggregate(related, tape.parameter(params_, "gat.tcn.w"), tape.parameter(params_, "gat.tcn.b"));

  std::vector<Var> heads;
  for (std::size_t au = 0; au < n; ++au) {
    Var node = ops::reshape(ops::slice(smoothed, 1, au, au + 1), Shape{frames, b});
    heads.push_back(ops::linear(node, tape.parameter(params_, "head." + au_name(au) + ".w"),
                                tape.parameter(params_, "head." + au_name(au) + ".b")));
  }
  Var head = ops::stack(heads, 1);  // [T, N, outs]
  if (spec_.config.head == HeadKind::evidential) {
    Var evidence = ops::softplus(head);
    out.e_pos = ops::reshape(ops::slice(evidence, 2, 0, 1), Shape{frames, n});
    out.e_neg = ops::reshape(ops::slice(evidence, 2, 1, 2), Shape{frames, n});
  } else {
    out.logits = ops::reshape(head, Shape{frames, n});
  }
  return out;
}

Prediction UAUNet::predict(std::span<const Tensor> pyramid) {
  Tape tape;
  Var f = features(tape, pyramid);
  ForwardResult res = forward(tape, f, {}, ForwardMode::eval, nullptr);
  const std::size_t frames = f.shape()[0], n = spec_.num_aus();
  Prediction pred;
  pred.probs = Tensor(Shape{frames, n});
  pred.feature_variance = res.feature_variance;
  if (spec_.config.head == HeadKind::point) {
    const Tensor& logits = res.logits.value();
    for (std::size_t i = 0; i < logits.size(); ++i) pred.probs[i] = 1.0 / (1.0 + std::exp(-logits[i]));
    return pred;
  }
  const Tensor& ep = res.e_pos.value();
  const Tensor& en = res.e_neg.value();
  std::vector<BetaParams> row(n);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      row[i] = beta_from_evidence(Evidence{ep[t * n + i], en[t * n + i]});
      pred.probs[t * n + i] = expected_probability(row[i]);
    }
    pred.uncertainty.push_back(frame_uncertainty(row));
  }
  return pred;
}

std::vector<std::string> UAUNet::stage1_prefixes() { return {"afe.au", "cvae.", "aux."}; }

void UAUNet::save(const std::string& path, const Metadata& extra) const {
  Metadata meta = spec_to_metadata(spec_);
  for (const auto& [k, v] : extra) meta.emplace(k, v);
  save_parameters(path, params_, meta);
}

UAUNet UAUNet::load(const std::string& path) {
  ParameterFile file = load_parameters(path);
  ModelSpec spec = spec_from_metadata(file.meta);
  return UAUNet(std::move(spec), std::move(file.params));
}

}  // namespace uau
