#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "uau/errors.hpp"
#include "uau/model.hpp"
#include "uau/synthetic_data.hpp"

using namespace uau;

namespace {

SyntheticConfig small_data() {
  SyntheticConfig cfg;
  cfg.train_sequences = 1;
  cfg.eval_sequences = 1;
  cfg.frames_per_seq = 6;
  cfg.channels = 4;
  cfg.pyramid_sizes = {14, 7};
  return cfg;
}

ModelSpec spec_for(const SyntheticConfig& d, EmbeddingKind e = EmbeddingKind::cvae,
                   HeadKind h = HeadKind::evidential) {
  ModelSpec spec;
  spec.assignment = d.assignment;
  spec.channels = d.channels;
  spec.pyramid_sizes = d.pyramid_sizes;
  spec.config.latent_dim = 5;
  spec.config.embedding = e;
  spec.config.head = h;
  return spec;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("uau_test_model_" + name)).string();
}

}  // namespace

TEST_CASE("config validation and enum parsing") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.gda_kernel = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_embedding_kind("cvae") == EmbeddingKind::cvae);
  CHECK(parse_head_kind(to_string(HeadKind::point)) == HeadKind::point);
  CHECK_THROWS_AS(parse_embedding_kind("vae"), ConfigError);
  CHECK_THROWS_AS(parse_head_kind(""), ConfigError);
}

TEST_CASE("spec metadata round trip") {
  const ModelSpec spec = spec_for(small_data(), EmbeddingKind::deterministic, HeadKind::point);
  const ModelSpec back = spec_from_metadata(spec_to_metadata(spec));
  CHECK(spec_to_metadata(back) == spec_to_metadata(spec));
  CHECK(back.assignment.region_of == spec.assignment.region_of);
  CHECK(back.config.head == HeadKind::point);
  Metadata broken = spec_to_metadata(spec);
  broken.erase(broken.begin());
  CHECK_THROWS_AS(spec_from_metadata(broken), ConfigError);
}

TEST_CASE("predictions are well formed for every variant") {
  const SyntheticConfig d = small_data();
  const Dataset data = generate_dataset(d);
  const auto pyramid = render_features(d, data.sequences[0]);
  for (EmbeddingKind e : {EmbeddingKind::cvae, EmbeddingKind::deterministic})
    for (HeadKind h : {HeadKind::evidential, HeadKind::point}) {
      UAUNet m(spec_for(d, e, h), 4);
      const Prediction p = m.predict(pyramid);
      CHECK(p.probs.shape() == Shape{6, 8});
      for (double v : p.probs.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
      CHECK(p.uncertainty.size() == (h == HeadKind::evidential ? 6u : 0u));
      for (double u : p.uncertainty) {
        CHECK(u > 0.0);
        CHECK(u <= 1.0);
      }
      CHECK(p.feature_variance.size() == (e == EmbeddingKind::cvae ? 6u : 0u));
    }
}

TEST_CASE("forward modes") {
  const SyntheticConfig d = small_data();
  const Dataset data = generate_dataset(d);
  const auto pyramid = render_features(d, data.sequences[0]);
  UAUNet m(spec_for(d), 4);
  Tape tape;
  Var f = m.features(tape, pyramid);
  CHECK_THROWS_AS(m.forward(tape, f, data.sequences[0].labels, ForwardMode::stage1, nullptr), DomainError);
  Rng rng(1);
  const ForwardResult s1 = m.forward(tape, f, data.sequences[0].labels, ForwardMode::stage1, &rng);
  CHECK(s1.cls_loss.has_value());
  CHECK(s1.kl.has_value());
  // Stage 1 conditions on the ground-truth combination.
  CHECK(s1.acp_logits.empty());
  // Evaluation uses z = mu and needs no noise; repeated calls agree.
  Tape t2;
  Var f2 = m.features(t2, pyramid);
  const ForwardResult a = m.forward(t2, f2, {}, ForwardMode::eval, nullptr);
  const ForwardResult b = m.forward(t2, f2, {}, ForwardMode::eval, nullptr);
  CHECK(a.e_pos.value() == b.e_pos.value());
  CHECK(a.acp_logits.size() == kNumRegions);
  CHECK_FALSE(a.kl.has_value());
  for (double v : a.e_pos.value().data()) CHECK(v >= 0.0);
}

TEST_CASE("initialization is seeded") {
  const SyntheticConfig d = small_data();
  UAUNet a(spec_for(d), 9), b(spec_for(d), 9), c(spec_for(d), 10);
  bool differs = false;
  for (const auto& [name, e] : a.params().entries()) {
    CHECK(e.value == b.params().value(name));
    differs |= !(e.value == c.params().value(name));
  }
  CHECK(differs);
}

TEST_CASE("save and load reproduce predictions bit for bit") {
  const SyntheticConfig d = small_data();
  const Dataset data = generate_dataset(d);
  const auto pyramid = render_features(d, data.sequences[1]);
  UAUNet m(spec_for(d), 4);
  const std::string path = temp_path("roundtrip.txt");
  m.save(path, {{"stage", "2"}});
  UAUNet back = UAUNet::load(path);
  CHECK(spec_to_metadata(back.spec()) == spec_to_metadata(m.spec()));
  const Prediction p = m.predict(pyramid);
  const Prediction q = back.predict(pyramid);
  CHECK(p.probs == q.probs);
  CHECK(p.uncertainty == q.uncertainty);
  std::remove(path.c_str());

  ParameterStore wrong = m.params();
  wrong.add("extra", Tensor({1}));
  CHECK_THROWS_AS(UAUNet(m.spec(), wrong), ConfigError);
  ParameterStore reshaped;
  for (const auto& [name, e] : m.params().entries()) reshaped.add(name, name == "head.au0.b" ? Tensor({3}) : e.value);
  CHECK_THROWS_AS(UAUNet(m.spec(), reshaped), ConfigError);
  CHECK_THROWS(UAUNet::load("/nonexistent/model.txt"));
}
