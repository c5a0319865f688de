#pragma once

// Command-line front end. Subcommands: synth, train-base, retrieve, train-gan,
// eval, sweep. Every run writes its artifacts and a manifest under --out.

#include <ostream>

namespace fsv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissing = 3;

// Output file names.
inline constexpr const char* kGroundTruthFile = "ground_truth.json";
inline constexpr const char* kBaseClassifierFile = "base_classifier.tsv";
inline constexpr const char* kPseudoSetFile = "pseudo_set.tsv";
inline constexpr const char* kGanFile = "gan.tsv";
inline constexpr const char* kGanLogFile = "gan_log.csv";
inline constexpr const char* kReportJsonFile = "report.json";
inline constexpr const char* kEpisodesCsvFile = "episodes.csv";
inline constexpr const char* kSweepCsvFile = "sweep.csv";

// Runs one command line and returns the process exit code. Nothing is thrown.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fsv::cli
