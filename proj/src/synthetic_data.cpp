#include "uau/synthetic_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "uau/errors.hpp"
#include "uau/random.hpp"

namespace uau {

using nlohmann::json;

namespace {

constexpr const char* kDatasetSchema = "uaunet-dataset/1";

// Seed-stream keys.
constexpr std::uint64_t kLabelStream = 1;
constexpr std::uint64_t kRenderStream = 2;
constexpr std::uint64_t kSignatureStream = 3;

// Spatial width of an AU bump, in units of the face side.
constexpr double kBumpWidth = 0.2;

// Row centre of each region's bumps, inside the rows no other region sees.
constexpr double kRegionCentre[kNumRegions] = {1.0 / 7.0, 3.5 / 7.0, 6.0 / 7.0};

// Labels for one joint draw: with probability co_occurrence a single shared
// uniform thresholds every AU (comonotone), otherwise AUs are independent.
void draw_pattern(const SyntheticConfig& cfg, Rng& rng, int* out) {
  const std::size_t n = cfg.num_aus();
  if (rng.bernoulli(cfg.co_occurrence)) {
    const double u = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) out[i] = u < cfg.positive_rates[i] ? 1 : 0;
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = rng.bernoulli(cfg.positive_rates[i]) ? 1 : 0;
  }
}

// Onset and offset ramps: the first active frame is partial, and the frame
// after an offset keeps a faint trace.
double intensity(int now, int prev) {
  if (now) return prev ? 1.0 : 0.6;
  return prev ? 0.3 : 0.0;
}

struct BumpMap {
  // [N, s, s] Gaussian bump of each AU on a grid of side s.
  std::vector<double> values;
};

BumpMap bumps_for(const SyntheticConfig& cfg, std::size_t side) {
  const std::size_t n = cfg.num_aus();
  BumpMap map;
  map.values.assign(n * side * side, 0.0);
  for (std::size_t au = 0; au < n; ++au) {
    const std::size_t region = cfg.assignment.region_of[au];
    const double cy = kRegionCentre[region];
    const double cx = (static_cast<double>(cfg.assignment.position(au)) + 0.5) /
                      static_cast<double>(cfg.assignment.sub_count(region));
    for (std::size_t i = 0; i < side; ++i) {
      const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(side);
      for (std::size_t j = 0; j < side; ++j) {
        const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(side);
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        map.values[(au * side + i) * side + j] = std::exp(-d2 / (2.0 * kBumpWidth * kBumpWidth));
      }
    }
  }
  return map;
}

// Unit-norm channel pattern of each AU, fixed by the dataset seed.
std::vector<double> channel_signatures(const SyntheticConfig& cfg, std::uint64_t key) {
  const std::size_t n = cfg.num_aus(), c = cfg.channels;
  Rng rng(derive_seed(cfg.seed, {kSignatureStream, key}));
  std::vector<double> sig(n * c);
  for (std::size_t au = 0; au < n; ++au) {
    double norm = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      sig[au * c + k] = rng.normal();
      norm += sig[au * c + k] * sig[au * c + k];
    }
    norm = std::sqrt(norm);
    for (std::size_t k = 0; k < c; ++k) sig[au * c + k] *= std::sqrt(static_cast<double>(c)) / norm;
  }
  return sig;
}

json config_to_json(const SyntheticConfig& cfg) {
  return json{{"au_regions", cfg.assignment.region_of},
              {"train_sequences", cfg.train_sequences},
              {"eval_sequences", cfg.eval_sequences},
              {"frames_per_seq", cfg.frames_per_seq},
              {"positive_rates", cfg.positive_rates},
              {"co_occurrence", cfg.co_occurrence},
              {"segment_length", cfg.segment_length},
              {"segment_stay", cfg.segment_stay},
              {"signal_scale", cfg.signal_scale},
              {"subject_offset_scale", cfg.subject_offset_scale},
              {"noise_scale", cfg.noise_scale},
              {"occlusion_prob", cfg.occlusion_prob},
              {"occlusion_noise", cfg.occlusion_noise},
              {"channels", cfg.channels},
              {"pyramid_sizes", cfg.pyramid_sizes},
              {"seed", cfg.seed}};
}

SyntheticConfig config_from_json(const json& j) {
  SyntheticConfig cfg;
  cfg.assignment.region_of = j.at("au_regions").get<std::vector<std::size_t>>();
  cfg.train_sequences = j.at("train_sequences").get<std::size_t>();
  cfg.eval_sequences = j.at("eval_sequences").get<std::size_t>();
  cfg.frames_per_seq = j.at("frames_per_seq").get<std::size_t>();
  cfg.positive_rates = j.at("positive_rates").get<std::vector<double>>();
  cfg.co_occurrence = j.at("co_occurrence").get<double>();
  cfg.segment_length = j.at("segment_length").get<std::size_t>();
  cfg.segment_stay = j.at("segment_stay").get<double>();
  cfg.signal_scale = j.at("signal_scale").get<double>();
  cfg.subject_offset_scale = j.at("subject_offset_scale").get<double>();
  cfg.noise_scale = j.at("noise_scale").get<double>();
  cfg.occlusion_prob = j.at("occlusion_prob").get<double>();
  cfg.occlusion_noise = j.at("occlusion_noise").get<double>();
  cfg.channels = j.at("channels").get<std::size_t>();
  cfg.pyramid_sizes = j.at("pyramid_sizes").get<std::vector<std::size_t>>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

}  // namespace

void SyntheticConfig::validate() const {
  assignment.validate();
  if (positive_rates.size() != num_aus())
    throw ConfigError("positive_rates: expected " + std::to_string(num_aus()) + " values, got " +
                      std::to_string(positive_rates.size()));
  for (double r : positive_rates)
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("positive_rates: every rate must lie in (0,1)");
  if (!(occlusion_prob >= 0.0 && occlusion_prob < 1.0)) throw ConfigError("occlusion_prob must lie in [0,1)");
  if (!(co_occurrence >= 0.0 && co_occurrence <= 1.0)) throw ConfigError("co_occurrence must lie in [0,1]");
  if (!(segment_stay >= 0.0 && segment_stay <= 1.0)) throw ConfigError("segment_stay must lie in [0,1]");
  if (!(noise_scale >= 0.0) || !(subject_offset_scale >= 0.0) || !(signal_scale >= 0.0) ||
      !(occlusion_noise >= 0.0))
    throw ConfigError("noise, offset, signal and occlusion scales must be >= 0");
  if (train_sequences + eval_sequences == 0) throw ConfigError("dataset needs at least one sequence");
  if (frames_per_seq == 0) throw ConfigError("frames_per_seq must be >= 1");
  if (segment_length == 0) throw ConfigError("segment_length must be >= 1");
  if (channels == 0) throw ConfigError("channels must be >= 1");
  if (pyramid_sizes.empty()) throw ConfigError("pyramid_sizes must not be empty");
  for (std::size_t s : pyramid_sizes)
    if (s < 7) throw ConfigError("pyramid_sizes: every side must be >= 7");
}

bool Sequence::frame_occluded(std::size_t t) const {
  for (std::size_t r = 0; r < kNumRegions; ++r)
    if (occluded.at(t * kNumRegions + r)) return true;
  return false;
}

std::vector<std::size_t> Dataset::split(bool train) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < sequences.size(); ++i)
    if (sequences[i].train == train) out.push_back(i);
  return out;
}

std::vector<std::vector<double>> pattern_tables(const SyntheticConfig& cfg) {
  std::vector<std::vector<double>> tables;
  for (std::size_t r = 0; r < kNumRegions; ++r) {
    const auto members = cfg.assignment.members(r);
    const std::size_t n = members.size();
    std::vector<double> table(std::size_t{1} << n, 0.0);
    // Independent component.
    for (std::size_t k = 0; k < table.size(); ++k) {
      double p = 1.0 - cfg.co_occurrence;
      for (std::size_t i = 0; i < n; ++i) {
        const double rate = cfg.positive_rates[members[i]];
        p *= (k >> i) & 1 ? rate : 1.0 - rate;
      }
      table[k] += p;
    }
    // Comonotone component: the pattern is constant between sorted rates.
    std::vector<double> cuts{0.0, 1.0};
    for (std::size_t au : members) cuts.push_back(cfg.positive_rates[au]);
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double width = cuts[c + 1] - cuts[c];
      if (width <= 0.0) continue;
      const double u = 0.5 * (cuts[c] + cuts[c + 1]);
      std::size_t k = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (u < cfg.positive_rates[members[i]]) k |= std::size_t{1} << i;
      table[k] += cfg.co_occurrence * width;
    }
    tables.push_back(std::move(table));
  }
  return tables;
}

Dataset generate_dataset(const SyntheticConfig& cfg) {
  cfg.validate();
  Dataset data;
  data.config = cfg;
  data.pattern_tables = pattern_tables(cfg);
  const std::size_t n = cfg.num_aus(), frames = cfg.frames_per_seq;
  const std::size_t total = cfg.train_sequences + cfg.eval_sequences;
  std::vector<int> pattern(n);
  for (std::size_t id = 0; id < total; ++id) {
    Rng rng(derive_seed(cfg.seed, {kLabelStream, id}));
    Sequence seq;
    seq.id = id;
    seq.train = id < cfg.train_sequences;
    seq.frames = frames;
    seq.labels.resize(frames * n);
    seq.occluded.assign(frames * kNumRegions, 0);
    for (std::size_t start = 0; start < frames; start += cfg.segment_length) {
      if (start == 0 || !rng.bernoulli(cfg.segment_stay)) draw_pattern(cfg, rng, pattern.data());
      std::array<int, kNumRegions> occ{};
      for (auto& o : occ) o = rng.bernoulli(cfg.occlusion_prob) ? 1 : 0;
      const std::size_t stop = std::min(frames, start + cfg.segment_length);
      for (std::size_t t = start; t < stop; ++t) {
        std::copy(pattern.begin(), pattern.end(), seq.labels.begin() + static_cast<std::ptrdiff_t>(t * n));
        std::copy(occ.begin(), occ.end(), seq.occluded.begin() + static_cast<std::ptrdiff_t>(t * kNumRegions));
      }
    }
    data.sequences.push_back(std::move(seq));
  }
  return data;
}

std::vector<Tensor> render_features(const SyntheticConfig& cfg, const Sequence& seq) {
  const std::size_t n = cfg.num_aus(), c = cfg.channels, frames = seq.frames;
  if (seq.labels.size() != frames * n || seq.occluded.size() != frames * kNumRegions)
    throw ShapeError("render_features: sequence " + std::to_string(seq.id) + " has inconsistent label arrays");
  const std::vector<double> signature = channel_signatures(cfg, 0);
  const std::vector<double> morphology_sig = channel_signatures(cfg, 1);

  // Subject offset: a per-channel constant plus static AU-shaped blobs, so
  // appearance alone is confounded across subjects while motion is not.
  Rng subject(derive_seed(cfg.seed, {kRenderStream, seq.id, 0}));
  std::vector<double> channel_offset(c), morphology(n);
  for (auto& v : channel_offset) v = cfg.subject_offset_scale * subject.normal();
  for (auto& v : morphology) v = cfg.subject_offset_scale * subject.normal();

  std::vector<Tensor> pyramid;
  for (std::size_t level = 0; level < cfg.pyramid_sizes.size(); ++level) {
    const std::size_t side = cfg.pyramid_sizes[level];
    const BumpMap bumps = bumps_for(cfg, side);
    const RegionSlices slices = partition_regions(side);
    const std::size_t plane = side * side;
    Tensor x(Shape{frames, c, side, side});
    for (std::size_t t = 0; t < frames; ++t) {
      // One noise stream per (sequence, frame, level): any frame can be
      // regenerated on its own.
      Rng noise(derive_seed(cfg.seed, {kRenderStream, seq.id, 1 + t, level}));
      std::vector<double> amp(n);
      for (std::size_t au = 0; au < n; ++au) {
        const int now = seq.labels[t * n + au];
        const int prev = t > 0 ? seq.labels[(t - 1) * n + au] : now;
        amp[au] = cfg.signal_scale * intensity(now, prev);
      }
      for (std::size_t ch = 0; ch < c; ++ch) {
        double* out = x.data().data() + (t * c + ch) * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          double v = channel_offset[ch];
          for (std::size_t au = 0; au < n; ++au) {
            const double b = bumps.values[au * plane + p];
            v += (amp[au] * signature[au * c + ch] + morphology[au] * morphology_sig[au * c + ch]) * b;
          }
          out[p] = v + cfg.noise_scale * noise.normal();
        }
      }
      for (std::size_t r = 0; r < kNumRegions; ++r) {
        if (!seq.occluded[t * kNumRegions + r]) continue;
        for (std::size_t ch = 0; ch < c; ++ch) {
          double* out = x.data().data() + (t * c + ch) * plane;
          for (std::size_t i = slices[r].begin; i < slices[r].end; ++i)
            for (std::size_t j = 0; j < side; ++j) out[i * side + j] = cfg.occlusion_noise * noise.normal();
        }
      }
    }
    pyramid.push_back(std::move(x));
  }
  return pyramid;
}

FeatureCache render_split(const Dataset& data, bool train) {
  FeatureCache cache(data.sequences.size());
  for (std::size_t idx : data.split(train)) cache[idx] = render_features(data.config, data.sequences[idx]);
  return cache;
}

void write_dataset(std::ostream& os, const Dataset& data) {
  const std::size_t n = data.config.num_aus();
  json header{{"type", "header"},
              {"schema", kDatasetSchema},
              {"config", config_to_json(data.config)},
              {"pattern_tables", data.pattern_tables}};
  os << header.dump() << '\n';
  for (const Sequence& seq : data.sequences) {
    for (std::size_t t = 0; t < seq.frames; ++t) {
      std::vector<int> labels(seq.labels.begin() + static_cast<std::ptrdiff_t>(t * n),
                              seq.labels.begin() + static_cast<std::ptrdiff_t>((t + 1) * n));
      std::vector<std::size_t> occluded;
      for (std::size_t r = 0; r < kNumRegions; ++r)
        if (seq.occluded[t * kNumRegions + r]) occluded.push_back(r);
      json rec{{"seq_id", seq.id},
               {"t", t},
               {"labels", labels},
               {"generator_meta", {{"split", seq.train ? "train" : "eval"}, {"occluded_regions", occluded}}}};
      os << rec.dump() << '\n';
    }
  }
}

Dataset read_dataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("dataset: empty file");
  Dataset data;
  try {
    const json header = json::parse(line);
    if (header.value("schema", "") != kDatasetSchema)
      throw ConfigError("dataset: unsupported schema '" + header.value("schema", "") + "'");
    data.config = config_from_json(header.at("config"));
    data.config.validate();
    data.pattern_tables = header.at("pattern_tables").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset header: ") + e.what());
  }
  const std::size_t n = data.config.num_aus();
  const std::size_t frames = data.config.frames_per_seq;
  const std::size_t total = data.config.train_sequences + data.config.eval_sequences;
  data.sequences.resize(total);
  for (std::size_t id = 0; id < total; ++id) {
    Sequence& s = data.sequences[id];
    s.id = id;
    s.train = id < data.config.train_sequences;
    s.frames = frames;
    s.labels.assign(frames * n, -1);
    s.occluded.assign(frames * kNumRegions, 0);
  }
  std::size_t records = 0, line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      const auto id = rec.at("seq_id").get<std::size_t>();
      const auto t = rec.at("t").get<std::size_t>();
      const auto labels = rec.at("labels").get<std::vector<int>>();
      if (id >= total || t >= frames || labels.size() != n)
        throw ConfigError("dataset line " + std::to_string(line_no) + ": record out of range");
      Sequence& s = data.sequences[id];
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0 && labels[i] != 1)
          throw ConfigError("dataset line " + std::to_string(line_no) + ": labels must be 0/1");
        s.labels[t * n + i] = labels[i];
      }
      for (auto r : rec.at("generator_meta").at("occluded_regions").get<std::vector<std::size_t>>()) {
        if (r >= kNumRegions) throw ConfigError("dataset line " + std::to_string(line_no) + ": bad region");
        s.occluded[t * kNumRegions + r] = 1;
      }
      ++records;
    } catch (const json::exception& e) {
      throw ConfigError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (records != total * frames)
    throw ConfigError("dataset: expected " + std::to_string(total * frames) + " frame records, found " +
                      std::to_string(records));
  for (const Sequence& s : data.sequences)
    if (std::find(s.labels.begin(), s.labels.end(), -1) != s.labels.end())
      throw ConfigError("dataset: sequence " + std::to_string(s.id) + " is missing frames");
  return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  write_dataset(os, data);
  if (!os) throw ConfigError("write to '" + path + "' failed");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open dataset '" + path + "'");
  return read_dataset(is);
}

}  // namespace uau
