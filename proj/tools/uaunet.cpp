// uaunet: dataset generation, training, evaluation and verification.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "uau/ablation.hpp"
#include "uau/config.hpp"
#include "uau/errors.hpp"
#include "uau/reports.hpp"
#include "uau/serialization.hpp"
#include "uau/verification.hpp"

namespace {

using namespace uau;

// Exit codes by error family.
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDomain = 3;
constexpr int kExitDivergence = 4;

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

int fail(const char* command, const char* kind, const std::string& message, int code) {
  std::cerr << "error command=" << command << " kind=" << kind << " message=" << quote(message) << std::endl;
  return code;
}

ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_config(path);
}

std::string describe_model(const std::string& path, const Metadata& meta) {
  std::string out = path;
  for (const char* key : {"embedding", "head", "stage", "train_seed"}) {
    auto it = meta.find(key);
    if (it != meta.end()) out += std::string(" ") + key + "=" + it->second;
  }
  return out;
}

struct Args {
  std::string config, data, out, log, init, model, report, grid = "default", measure = "frame", split = "eval";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> seeds;
  std::string rows;
  int stage = 0;
  double tol = 0.0;
  std::size_t bins = 3;
  bool docs = false;
};

int cmd_gen_data(const Args& a) {
  ExperimentConfig cfg = config_or_default(a.config);
  if (a.seed) cfg.data.seed = *a.seed;
  cfg.data.validate();
  const Dataset data = generate_dataset(cfg.data);
  save_dataset(a.out, data);
  std::cout << "wrote " << a.out << " sequences=" << data.sequences.size() << " seed=" << cfg.data.seed << "\n";
  return 0;
}

int cmd_train(const Args& a) {
  const ExperimentConfig cfg = config_or_default(a.config);
  const Dataset data = load_dataset(a.data);
  const ModelSpec spec = model_spec(data.config, cfg.model);
  std::optional<UAUNet> model;
  if (!a.init.empty()) {
    UAUNet loaded = UAUNet::load(a.init);
    if (spec_to_metadata(loaded.spec()) != spec_to_metadata(spec))
      throw ConfigError("--init model layout differs from the config and dataset");
    model.emplace(std::move(loaded));
  } else if (a.stage == 2) {
    throw ConfigError("stage 2 needs the stage-1 model via --init");
  } else {
    model.emplace(spec, cfg.train.seed);
  }

  std::unique_ptr<std::ofstream> log;
  if (!a.log.empty()) {
    log = std::make_unique<std::ofstream>(a.log, std::ios::trunc);
    if (!*log) throw ConfigError("cannot write log '" + a.log + "'");
  }
  const FeatureCache cache = render_split(data, true);
  const TrainResult result = a.stage == 1 ? train_stage1(*model, data, cfg.train, cfg.loss, log.get(), &cache)
                                          : train_stage2(*model, data, cfg.train, cfg.loss, log.get(), &cache);
  model->save(a.out, {{"stage", std::to_string(a.stage)},
                      {"train_seed", std::to_string(cfg.train.seed)},
                      {"data_seed", std::to_string(data.config.seed)}});
  std::cout << "wrote " << a.out << " stage=" << a.stage << " epochs=" << result.epochs.size();
  if (!result.epochs.empty()) std::cout << " final_loss=" << format_double(result.epochs.back().loss);
  std::cout << "\n";
  return 0;
}

bool parse_split(const std::string& s) {
  if (s == "eval") return false;
  if (s == "train") return true;
  throw ConfigError("unknown split '" + s + "' (expected eval|train)");
}

int cmd_eval(const Args& a) {
  const bool train_split = parse_split(a.split);
  const Dataset data = load_dataset(a.data);
  const ParameterFile file = load_parameters(a.model);
  UAUNet model = UAUNet::load(a.model);
  const EvalReport r = evaluate(model, data, train_split);
  write_report(a.report, render_eval_report(r, {a.data, describe_model(a.model, file.meta), data.config.seed, a.split}));
  std::cout << "average_f1 " << format_double(r.average_f1) << "\n";
  return 0;
}

int cmd_stratify(const Args& a) {
  const bool train_split = parse_split(a.split);
  const UncertaintyMeasure measure = parse_uncertainty_measure(a.measure);
  const Dataset data = load_dataset(a.data);
  const ParameterFile file = load_parameters(a.model);
  UAUNet model = UAUNet::load(a.model);
  const StratifiedReport r = stratify_uncertainty(predict_split(model, data, train_split, nullptr, measure), a.bins);
  write_report(a.report, render_stratified_report(
                             r, {a.data, describe_model(a.model, file.meta), data.config.seed, a.split}, measure));
  if (r.degenerate) std::cerr << "warning " << r.warning << "\n";
  std::cout << "monotone_error " << (r.monotone_error() ? "yes" : "no") << " occlusion_enrichment "
            << format_double(r.occlusion_enrichment) << "\n";
  return 0;
}

int cmd_verify_oracle(const Args& a) {
  if (a.grid != "default") throw ConfigError("unknown grid '" + a.grid + "' (only 'default')");
  const OracleReport r = verify_oracle(OracleGrid{}, a.tol);
  write_report(a.report, render_oracle_report(r));
  std::cout << "max_rel_err " << format_double(r.max_rel_err) << " points " << r.rows.size() << " "
            << (r.passed ? "PASS" : "FAIL") << "\n";
  if (!r.passed) return fail("verify-oracle", "VerificationFailed",
                             "max relative error " + format_double(r.max_rel_err) + " above " + format_double(a.tol),
                             kExitFailure);
  return 0;
}

int cmd_grad_check(const Args& a) {
  GradCheckTolerances tol;
  tol.abl = a.tol;
  const GradCheckSummary r = run_grad_checks(tol);
  const RenderedReport rendered = render_grad_check_report(r);
  if (!a.report.empty()) write_report(a.report, rendered);
  std::cout << rendered.text;
  if (!r.passed) return fail("grad-check", "VerificationFailed", "a gradient check exceeded its tolerance", kExitFailure);
  return 0;
}

int cmd_ablate(const Args& a) {
  ExperimentConfig cfg = config_or_default(a.config);
  if (a.seeds) cfg.ablation.seeds = *a.seeds;
  if (!a.rows.empty()) set_config_value(cfg, "ablate_rows", a.rows);
  const Dataset data = load_dataset(a.data);
  FeatureCache cache = render_split(data, true);
  FeatureCache eval_cache = render_split(data, false);
  for (std::size_t i = 0; i < cache.size(); ++i)
    if (cache[i].empty()) cache[i] = std::move(eval_cache[i]);
  const AblationReport r = run_ablation(cfg, data, &cache, &std::cerr);
  write_report(a.report, render_ablation_report(r, {a.data, "", data.config.seed, "eval"}));
  for (const auto& c : r.comparisons)
    std::cout << c.name << " mean " << format_double(c.mean) << " std " << format_double(c.std) << "\n";
  return 0;
}

int cmd_show_config(const Args& a) {
  const ExperimentConfig cfg = config_or_default(a.config);
  if (!a.docs) {
    std::cout << format_config(cfg);
    return 0;
  }
  std::string group;
  for (const auto& k : config_keys()) {
    if (k.group != group) {
      if (!group.empty()) std::cout << "\n";
      group = k.group;
      std::cout << "# " << group << "\n";
    }
    std::cout << "# " << k.doc << "\n" << k.name << " = " << get_config_value(cfg, k.name) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uaunet: uncertainty-aware multi-label AU classification on synthetic sequences"};
  app.require_subcommand(1);
  Args a;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset (labels and generator metadata)");
  gen->add_option("--config", a.config, "Config file (defaults when omitted)");
  gen->add_option("--out", a.out, "Dataset file (JSON lines)")->required();
  gen->add_option("--seed", a.seed, "Generator seed, overrides data_seed");

  auto* train = app.add_subcommand("train", "Run training stage 1 (embedding) or 2 (joint)");
  train->add_option("--data", a.data, "Dataset file")->required();
  train->add_option("--config", a.config, "Config file; data keys are taken from the dataset");
  train->add_option("--stage", a.stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--init", a.init, "Starting model (required for stage 2)");
  train->add_option("--out", a.out, "Output model file")->required();
  train->add_option("--log", a.log, "Per-epoch JSON lines log");

  auto* eval = app.add_subcommand("eval", "Per-AU precision, recall and F1");
  eval->add_option("--data", a.data, "Dataset file")->required();
  eval->add_option("--model", a.model, "Model file")->required();
  eval->add_option("--report", a.report, "Report path (text; JSON mirror at <path>.json)")->required();
  eval->add_option("--split", a.split, "eval or train")->capture_default_str();

  auto* verify = app.add_subcommand("verify-oracle", "Closed-form risk against quadrature on a grid");
  verify->add_option("--grid", a.grid, "Grid name")->capture_default_str();
  verify->add_option("--tol", a.tol, "Relative tolerance")->default_val(1e-6);
  verify->add_option("--report", a.report, "Report path")->required();

  auto* grad = app.add_subcommand("grad-check", "Analytic gradients against finite differences");
  grad->add_option("--tol", a.tol, "Tolerance for the closed-form risk gradients")->default_val(1e-4);
  grad->add_option("--report", a.report, "Optional report path");

  auto* strat = app.add_subcommand("stratify", "Error rates by uncertainty quantile");
  strat->add_option("--data", a.data, "Dataset file")->required();
  strat->add_option("--model", a.model, "Model file")->required();
  strat->add_option("--bins", a.bins, "Number of quantile strata")->capture_default_str();
  strat->add_option("--report", a.report, "Report path")->required();
  strat->add_option("--measure", a.measure, "frame or feature_variance")->capture_default_str();
  strat->add_option("--split", a.split, "eval or train")->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "Multi-seed component ablation");
  ablate->add_option("--data", a.data, "Dataset file")->required();
  ablate->add_option("--config", a.config, "Config file");
  ablate->add_option("--report", a.report, "Report path")->required();
  ablate->add_option("--seeds", a.seeds, "Overrides ablate_seeds");
  ablate->add_option("--rows", a.rows, "Overrides ablate_rows (comma list)");

  auto* show = app.add_subcommand("show-config", "Print every config key with its effective value");
  show->add_option("--config", a.config, "Config file");
  show->add_flag("--docs", a.docs, "Include a description of each key");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("parse", "UsageError", e.what(), kExitUsage);
  }

  const CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    if (sub == gen) return cmd_gen_data(a);
    if (sub == train) return cmd_train(a);
    if (sub == eval) return cmd_eval(a);
    if (sub == verify) return cmd_verify_oracle(a);
    if (sub == grad) return cmd_grad_check(a);
    if (sub == strat) return cmd_stratify(a);
    if (sub == ablate) return cmd_ablate(a);
    if (sub == show) return cmd_show_config(a);
  } catch (const ConfigError& e) {
    return fail(name.c_str(), "ConfigError", e.what(), kExitUsage);
  } catch (const ShapeError& e) {
    return fail(name.c_str(), "ShapeError", e.what(), kExitDomain);
  } catch (const DomainError& e) {
    return fail(name.c_str(), "DomainError", e.what(), kExitDomain);
  } catch (const ConvergenceError& e) {
    return fail(name.c_str(), "ConvergenceError", e.what(), kExitDomain);
  } catch (const DivergenceError& e) {
    return fail(name.c_str(), "DivergenceError", e.what(), kExitDivergence);
  } catch (const std::exception& e) {
    return fail(name.c_str(), "Error", e.what(), kExitFailure);
  }
  return kExitFailure;
}
