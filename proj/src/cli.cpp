#include "smaui/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "smaui/adapt.hpp"
#include "smaui/databench.hpp"
#include "smaui/errors.hpp"
#include "smaui/gmm.hpp"
#include "smaui/nn.hpp"
#include "smaui/pca.hpp"

namespace smaui::cli {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_flag(const std::string& value, const char* flag, const char* command) {
  if (value.empty()) throw UsageError(std::string(command) + " requires " + flag);
}

void echo_config(const CLI::App& app, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << app.config_to_str(true, false);
}

fs::path sibling(const std::string& out, const char* suffix) { return fs::path(out + suffix); }

Architecture architecture_for(const RunConfig& cfg, std::size_t input_dim, std::size_t num_classes) {
  Architecture arch;
  arch.input_dim = input_dim;
  arch.encoder_hidden = cfg.hidden == 0 ? std::vector<std::size_t>{} : std::vector<std::size_t>{cfg.hidden};
  arch.embedding_dim = cfg.embedding_dim;
  arch.num_classes = num_classes;
  arch.embedding_mode = parse_embedding_mode(cfg.embedding_mode);
  return arch;
}

void run_synth(const RunConfig& cfg, const CLI::App& app) {
  require_flag(cfg.out, "--out", "synth-data");
  ShiftSpec spec;
  spec.kind = parse_task_kind(cfg.task);
  spec.n = cfg.n;
  spec.rotation_deg = cfg.rotation;
  spec.offset = cfg.offset;
  spec.noise = cfg.noise;
  spec.seed = cfg.seed;
  spec.num_classes = cfg.classes;
  const DomainPair pair = generate(spec);
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  save_dataset(pair.source, dir / "source.csv");
  save_dataset(pair.target, dir / "target.csv");
  write_metadata(spec, dir / "metadata.json");
  echo_config(app, dir / "config.toml");
}

void run_train_source(const RunConfig& cfg, const CLI::App& app) {
  require_flag(cfg.data, "--data", "train-source");
  require_flag(cfg.out, "--out", "train-source");
  const Dataset source = load_dataset(cfg.data);
  if (!source.labeled()) throw ContractError("train-source: " + cfg.data + " is unlabeled");
  const std::size_t k = std::max<std::size_t>(2, source.inferred_num_classes());
  SourceTrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch;
  tc.lr = cfg.source_lr;
  tc.seed = cfg.seed;
  const SourceTrainResult result = train_source(source, architecture_for(cfg, source.features.cols(), k), tc);
  save_network(result.params, cfg.out);
  std::ofstream curve(sibling(cfg.out, ".loss.csv"), std::ios::trunc);
  curve << "epoch,loss\n";
  char buf[32];
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.17g", result.epoch_loss[e]);
    curve << e + 1 << ',' << buf << '\n';
  }
  echo_config(app, sibling(cfg.out, ".config.toml"));
  std::cerr << "train-source: final loss " << result.epoch_loss.back() << ", train accuracy "
            << accuracy(result.params, source) << '\n';
}

void run_estimate_gmm(const RunConfig& cfg, const CLI::App& app) {
  require_flag(cfg.data, "--data", "estimate-gmm");
  require_flag(cfg.checkpoint, "--checkpoint", "estimate-gmm");
  require_flag(cfg.out, "--out", "estimate-gmm");
  const NetworkParams params = load_network(cfg.checkpoint);
  const Dataset source = load_dataset(cfg.data, params.num_classes());
  if (!source.labeled()) throw ContractError("estimate-gmm: " + cfg.data + " is unlabeled");
  const GmmModel gmm = estimate_gmm(encode(params, source.features), *source.labels, params.num_classes(), cfg.reg_eps);
  save_gmm(gmm, cfg.out);
  echo_config(app, sibling(cfg.out, ".config.toml"));
}

void run_adapt(const RunConfig& cfg, const CLI::App& app) {
  require_flag(cfg.data, "--data", "adapt");
  require_flag(cfg.checkpoint, "--checkpoint", "adapt");
  require_flag(cfg.gmm, "--gmm", "adapt");
  require_flag(cfg.out, "--out", "adapt");
  const NetworkParams params = load_network(cfg.checkpoint);
  const GmmModel gmm = load_gmm(cfg.gmm);
  const Dataset target = load_dataset(cfg.data, params.num_classes());

  AdaptConfig ac;
  ac.lambda = cfg.lambda;
  ac.tau = cfg.tau;
  ac.iterations = cfg.itr;
  ac.batch_size = cfg.batch;
  ac.slices = cfg.slices;
  ac.lr = cfg.lr;
  ac.pseudo_size = cfg.pseudo_size;
  ac.seed = cfg.seed;
  ac.eval_every = cfg.eval_every;
  ac.freeze_classifier = cfg.freeze_classifier;
  ac.regenerate_pseudo_each_iteration = cfg.regenerate_pseudo;

  TargetEvaluator evaluator;
  if (target.labeled()) {
    evaluator = [&target](const NetworkParams& p) { return accuracy(p, target); };
  }
  const AdaptResult result = adapt(params, strip_labels(target), gmm, ac, evaluator);
  save_network(result.params, cfg.out);
  write_report(result.report, cfg.report.empty() ? sibling(cfg.out, ".report.jsonl") : fs::path(cfg.report));
  if (!cfg.pseudo_out.empty()) {
    save_dataset(Dataset{result.pseudo.points, result.pseudo.labels, "pseudo"}, cfg.pseudo_out);
  }
  echo_config(app, sibling(cfg.out, ".config.toml"));
  std::cerr << "adapt: " << result.report.records.size() << " iterations in " << result.report.wall_seconds
            << " s, pseudo-dataset " << result.pseudo.accepted() << "/" << result.pseudo.attempts << " accepted\n";
}

void run_eval(const RunConfig& cfg, const CLI::App& app) {
  require_flag(cfg.data, "--data", "eval");
  require_flag(cfg.checkpoint, "--checkpoint", "eval");
  require_flag(cfg.out, "--out", "eval");
  const NetworkParams params = load_network(cfg.checkpoint);
  const Dataset ds = load_dataset(cfg.data, params.num_classes());
  if (!ds.labeled()) throw ContractError("eval: " + cfg.data + " is unlabeled");
  const Metrics m = evaluate(params, ds);
  std::ofstream out(cfg.out, std::ios::trunc);
  if (!out) throw IoError("cannot open " + cfg.out + " for writing");
  out << m.to_json().dump(2) << '\n';
  echo_config(app, sibling(cfg.out, ".config.toml"));
  std::cout << "accuracy " << m.accuracy << '\n';
}

void run_export(const RunConfig& cfg, const CLI::App& app) {
  require_flag(cfg.data, "--data", "export-embedding");
  require_flag(cfg.checkpoint, "--checkpoint", "export-embedding");
  require_flag(cfg.out, "--out", "export-embedding");
  const NetworkParams params = load_network(cfg.checkpoint);
  const Dataset ds = load_dataset(cfg.data, params.num_classes());
  export_embedding(params, ds, cfg.out);
  echo_config(app, sibling(cfg.out, ".config.toml"));
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  RunConfig cfg;
  CLI::App app{"Source-free model adaptation through an internal Gaussian-mixture distribution", "smaui"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML/INI config file; command line flags take precedence");
  app.require_subcommand(1, 1);
  app.fallthrough();

  app.add_option("--seed", cfg.seed, "Seed for all randomness");
  app.add_option("--data", cfg.data, "Input dataset CSV");
  app.add_option("--checkpoint", cfg.checkpoint, "Network checkpoint to read");
  app.add_option("--gmm", cfg.gmm, "GMM checkpoint to read");
  app.add_option("--out", cfg.out, "Output path (directory for synth-data)");
  app.add_option("--report", cfg.report, "Adaptation report path");
  app.add_option("--pseudo-out", cfg.pseudo_out, "Write the pseudo-dataset CSV here");
  app.add_option("--task", cfg.task, "rotated-moons | translated-blobs")
      ->check(CLI::IsMember({"rotated-moons", "translated-blobs"}));
  app.add_option("--n", cfg.n, "Samples per domain");
  app.add_option("--rotation", cfg.rotation, "Target rotation in degrees");
  app.add_option("--offset", cfg.offset, "Target translation (two values)")->expected(2);
  app.add_option("--noise", cfg.noise, "Gaussian noise std");
  app.add_option("--classes", cfg.classes, "Cluster count for translated-blobs");
  app.add_option("--hidden", cfg.hidden, "Encoder hidden width (0 for none)");
  app.add_option("--embedding-dim", cfg.embedding_dim, "Embedding dimension p");
  app.add_option("--embedding-mode", cfg.embedding_mode, "pre-softmax | simplex")
      ->check(CLI::IsMember({"pre-softmax", "simplex"}));
  app.add_option("--epochs", cfg.epochs, "Source training epochs");
  app.add_option("--source-lr", cfg.source_lr, "Source training learning rate");
  app.add_option("--batch", cfg.batch, "Mini-batch size");
  app.add_option("--reg-eps", cfg.reg_eps, "Covariance regularisation (default: data-scaled)");
  app.add_option("--lambda", cfg.lambda, "Alignment term weight");
  app.add_option("--tau", cfg.tau, "Pseudo-label confidence threshold");
  app.add_option("--itr", cfg.itr, "Adaptation iterations");
  app.add_option("--slices", cfg.slices, "Projection directions per step");
  app.add_option("--lr", cfg.lr, "Adaptation learning rate");
  app.add_option("--pseudo-size", cfg.pseudo_size, "Pseudo-dataset size (default: source size)");
  app.add_option("--eval-every", cfg.eval_every, "Iteration stride for target accuracy logging");
  app.add_flag("--freeze-classifier", cfg.freeze_classifier, "Only update the encoder during adaptation");
  app.add_flag("--regenerate-pseudo", cfg.regenerate_pseudo, "Redraw the pseudo-dataset every iteration");

  struct Command {
    const char* name;
    const char* help;
    void (*run)(const RunConfig&, const CLI::App&);
  };
  const Command commands[] = {
      {"synth-data", "Generate a synthetic source/target pair", run_synth},
      {"train-source", "Train encoder and classifier on labelled source data", run_train_source},
      {"estimate-gmm", "Estimate the internal distribution from source embeddings", run_estimate_gmm},
      {"adapt", "Adapt a trained model to unlabelled target data", run_adapt},
      {"eval", "Accuracy and confusion matrix on a labelled dataset", run_eval},
      {"export-embedding", "Write 2-D PCA of the embeddings as CSV", run_export},
  };
  for (const auto& c : commands) app.add_subcommand(c.name, c.help);

  std::vector<const char*> argv{"smaui"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "smaui: usage error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    for (const auto& c : commands) {
      if (app.got_subcommand(c.name)) c.run(cfg, app);
    }
  } catch (const UsageError& e) {
    std::cerr << "smaui: usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "smaui: error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args);
}

}  // namespace smaui::cli
