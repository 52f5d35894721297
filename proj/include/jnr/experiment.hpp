#ifndef JNR_EXPERIMENT_HPP_
#define JNR_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "jnr/evaluator.hpp"
#include "jnr/model.hpp"
#include "jnr/synth_data.hpp"
#include "jnr/trainer.hpp"

namespace jnr {

enum class Precision { Float, Double };
std::string_view precision_name(Precision p);
/// Accepts float/double (also f32/f64); throws InputError.
Precision parse_precision(std::string_view name);

/// Everything needed to regenerate one synthetic dataset.
struct DatasetSpec {
  int num_classes = 81;  // Null followed by 1..num_classes-1
  /// Per-class count when imbalance_ratio is 1, else the smallest count.
  int min_count = 60;
  /// Largest count is min_count * imbalance_ratio.
  int imbalance_ratio = 1;
  /// Replaces the Null class count when set.
  std::optional<int> null_count;
  int style_seeds = 30;
  std::uint64_t style_seed_base = 1000;
  GeneratorParams params;

  ClassSet classes() const;
  ClassCounts counts() const;
  DatasetManifest manifest() const;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct RunSpec {
  std::string name;
  LossWeights weights = validate_weights(0.3, 0.35, 0.35);
  BackboneConfig backbone;
  std::vector<std::uint64_t> seeds;
  /// Defaults to default_eval_mode(weights).
  std::optional<PredictionMode> eval_mode;

  PredictionMode resolved_eval_mode() const {
    return eval_mode.value_or(default_eval_mode(weights));
  }
  /// Holistic for (1,0,0), DigitWise when alpha is 0, MultiTaskDefault
  /// otherwise.
  static PredictionMode default_eval_mode(const LossWeights& w);

  friend bool operator==(const RunSpec&, const RunSpec&) = default;
};

/// Parsed experiment file. Run backbones are fully resolved: the
/// [backbone] section plus per-run overrides, with the input size taken
/// from the dataset.
struct ExperimentSpec {
  std::filesystem::path output_dir = "out";
  Precision precision = Precision::Float;
  /// Seed list for runs the experiment generates itself (comparison,
  /// ablation grid).
  std::vector<std::uint64_t> seeds{1, 2, 3};
  DatasetSpec dataset;
  /// Template; loss_weights and seed are replaced per run.
  TrainConfig train;
  BackboneConfig backbone;
  std::vector<RunSpec> runs;

  /// Throws ConfigError.
  void validate() const;
  /// Canonical text form; parse_spec(serialize()) == *this.
  std::string serialize() const;
  /// Replaces every seed list (the generated-run list included) with {seed}.
  void override_seed(std::uint64_t seed);

  friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;
};

/// Sections [experiment], [dataset], [train], [backbone], [runs.<name>];
/// `key = value` lines, '#' comments. Reals accept fractions such as 1/3.
/// Throws ParseError (with the line number) for syntax errors, unknown
/// sections or keys, bad values and invalid weight triples, and
/// ConfigError for whole-spec problems.
ExperimentSpec parse_spec(std::istream& is);
ExperimentSpec parse_spec_file(const std::filesystem::path& path);

/// The three settings of the comparison, in table order.
std::vector<RunSpec> comparison_runs(const ExperimentSpec& spec);
/// The eight loss-weight triples of the ablation grid, in table order.
std::vector<LossWeights> ablation_grid();
std::vector<RunSpec> ablation_runs(const ExperimentSpec& spec);

struct SeedOutcome {
  std::uint64_t seed = 0;
  int best_iteration = 0;
  MetricsReport metrics;  // best checkpoint on the test split
  TrainingHistory history;
};

struct RunOutcome {
  RunSpec run;
  Index parameters = 0;
  std::vector<SeedOutcome> seeds;
};

/// Mean and sample standard deviation (0 for a single value).
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(const std::vector<double>& values);

struct ResultRow {
  std::string run;
  LossWeights weights = validate_weights(1, 0, 0);
  PredictionMode mode = PredictionMode::Holistic;
  Index parameters = 0;
  int seeds = 0;
  MeanStd accuracy, precision, recall, f1;
};

ResultRow summarize(const RunOutcome& outcome);

struct ResultsTable {
  std::string manifest_hash;
  std::vector<ResultRow> rows;

  static std::string csv_header();
  /// Fixed six-decimal formatting; byte-deterministic for equal rows.
  void write_csv(std::ostream& os) const;
  /// Row with the highest mean accuracy as written to the CSV; ties go to
  /// the earliest row. Throws InputError when empty.
  std::size_t best_row() const;
};

struct ExperimentResult {
  ResultsTable table;
  std::vector<RunOutcome> runs;
};

struct ExperimentOptions {
  /// Load a dataset written by `gen` instead of generating one.
  std::optional<std::filesystem::path> data_dir;
  /// Progress messages; nullptr for silence.
  std::ostream* log = nullptr;
};

/// The shared dataset for an experiment, from options.data_dir or rendered
/// from spec.dataset.
Dataset experiment_dataset(const ExperimentSpec& spec, const ExperimentOptions& options);

/// Trains every (run, seed) on one dataset, scores the best checkpoint on
/// the test split and writes under spec.output_dir:
///   manifest.txt, spec.txt, results.csv, curves.csv, curves.svg
///   <run>/metrics.csv, <run>/seed_<s>/{model.ckpt,history.csv}
/// Errors from a run are rethrown with the run name prepended.
ExperimentResult run_experiment(const ExperimentSpec& spec, const std::vector<RunSpec>& runs,
                                const Dataset& data, const ExperimentOptions& options = {});

/// Holistic / DigitWise / MultiTask. Uses spec.runs if they are exactly
/// those three weightings, else generates them with spec.seeds.
ExperimentResult run_comparison(const ExperimentSpec& spec, const ExperimentOptions& options = {});
/// The eight-triple grid; spec.runs must be empty or match the grid in order.
/// Also writes best.txt naming the best row.
ExperimentResult run_ablation(const ExperimentSpec& spec, const ExperimentOptions& options = {});
/// spec.runs, at least two with different backbones, all weighted
/// (0.3, 0.35, 0.35).
ExperimentResult run_backbone_sweep(const ExperimentSpec& spec,
                                    const ExperimentOptions& options = {});

/// Per-iteration mean of the seeds' validation accuracy (seeds share the
/// schedule, so their record iterations agree).
TrainingHistory mean_history(const std::vector<TrainingHistory>& seeds);

/// Writes `stem`.csv (iteration, one accuracy column per run; blank where a
/// run has no record) and `stem`.svg (one polyline per run, one point per
/// record). Throws InputError on empty or mismatched input.
void emit_curves(const std::vector<TrainingHistory>& histories,
                 const std::vector<std::string>& names, const std::filesystem::path& stem);

}  // namespace jnr

#endif  // JNR_EXPERIMENT_HPP_
