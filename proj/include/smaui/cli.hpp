#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace smaui::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

// Every flag of the command line tool. Defaults reproduce the reference
// hyperparameters (tau 0.99, lambda 1e-3, lr 1e-4).
struct RunConfig {
  std::uint64_t seed = 0;
  std::string data;
  std::string checkpoint;
  std::string gmm;
  std::string out;
  std::string report;      // adapt; defaults to <out>.report.jsonl
  std::string pseudo_out;  // adapt; optional CSV dump of the pseudo-dataset

  // synth-data
  std::string task = "rotated-moons";
  std::size_t n = 2000;
  double rotation = 40.0;
  std::vector<double> offset{0.0, 0.0};
  double noise = 0.1;
  std::size_t classes = 3;

  // architecture / source training
  std::size_t hidden = 32;
  std::size_t embedding_dim = 8;
  std::string embedding_mode = "pre-softmax";
  int epochs = 100;
  double source_lr = 1e-3;
  std::size_t batch = 64;

  // internal distribution
  std::optional<double> reg_eps;

  // adaptation
  double lambda = 1e-3;
  double tau = 0.99;
  int itr = 100;
  std::size_t slices = 128;
  double lr = 1e-4;
  std::optional<std::size_t> pseudo_size;
  int eval_every = 1;
  bool freeze_classifier = false;
  bool regenerate_pseudo = false;
};

// Runs one subcommand (synth-data | train-source | estimate-gmm | adapt |
// eval | export-embedding). `args` excludes the program name. Returns 0 on
// success, 2 on a usage error and 1 on any other failure; failures print a
// one-line diagnosis to stderr.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, const char* const* argv);

}  // namespace smaui::cli
