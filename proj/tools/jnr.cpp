// Command-line driver: dataset generation, single runs, evaluation and the
// experiment tables. Exit codes: 0 success, 1 validation error, 2 runtime
// failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "jnr/checkpoint.hpp"
#include "jnr/errors.hpp"
#include "jnr/experiment.hpp"

namespace fs = std::filesystem;
using namespace jnr;

namespace {

struct CommonFlags {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string precision;
  std::string data;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_spec = true) {
  auto* s = cmd->add_option("-s,--spec", f.spec, "experiment spec file");
  if (needs_spec) s->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", f.out, "output directory (overrides the spec)");
  cmd->add_option("--seed", f.seed, "replace every seed list with this seed");
  cmd->add_option("-p,--precision", f.precision, "float or double (overrides the spec)");
  cmd->add_option("--data", f.data, "dataset directory written by gen")
      ->check(CLI::ExistingDirectory);
}

ExperimentSpec load_spec(const CommonFlags& f) {
  ExperimentSpec spec = parse_spec_file(f.spec);
  if (!f.out.empty()) spec.output_dir = f.out;
  if (f.seed) spec.override_seed(*f.seed);
  if (!f.precision.empty()) spec.precision = parse_precision(f.precision);
  return spec;
}

ExperimentOptions options_for(const CommonFlags& f) {
  ExperimentOptions o;
  if (!f.data.empty()) o.data_dir = f.data;
  o.log = &std::cerr;
  return o;
}

void print_table(const ResultsTable& table) {
  std::ostringstream os;
  table.write_csv(os);
  std::cout << os.str();
}

int cmd_gen(const CommonFlags& f) {
  ExperimentSpec spec = parse_spec_file(f.spec);
  if (f.seed) spec.dataset.params.master_seed = *f.seed;
  const fs::path out = f.out.empty() ? spec.output_dir / "dataset" : fs::path(f.out);
  std::cerr << "rendering " << spec.dataset.num_classes << " classes\n";
  const Dataset data = Dataset::render(spec.dataset.manifest());
  data.write(out);
  std::cout << "wrote " << data.size() << " images to " << out.string() << " (manifest "
            << data.manifest().content_hash() << ")\n";
  return 0;
}

int cmd_train(const CommonFlags& f, const std::string& run_name) {
  const ExperimentSpec spec = load_spec(f);
  std::vector<RunSpec> candidates = spec.runs.empty() ? comparison_runs(spec) : spec.runs;
  RunSpec run = candidates.back();
  if (!run_name.empty()) {
    const auto it = std::find_if(candidates.begin(), candidates.end(),
                                 [&](const RunSpec& r) { return r.name == run_name; });
    if (it == candidates.end()) throw ConfigError("no run named '" + run_name + "'");
    run = *it;
  }
  if (!f.seed) run.seeds.resize(1);
  const ExperimentOptions opts = options_for(f);
  const Dataset data = experiment_dataset(spec, opts);
  const ExperimentResult r = run_experiment(spec, {run}, data, opts);
  print_table(r.table);
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint, const std::string& split_name,
             const std::string& mode_name_flag) {
  if (f.data.empty() && f.spec.empty()) throw ConfigError("eval needs --data or --spec");
  std::optional<Dataset> data;
  if (!f.data.empty()) {
    data.emplace(Dataset::load(fs::path(f.data)));
  } else {
    data.emplace(Dataset::render(load_spec(f).dataset.manifest()));
  }
  const Split split = parse_split(split_name);
  CheckpointMeta meta;
  const Precision precision = f.precision.empty() ? Precision::Float : parse_precision(f.precision);
  Evaluation ev;
  auto run = [&](const auto& net) {
    PredictionMode mode = PredictionMode::MultiTaskDefault;
    if (!mode_name_flag.empty()) {
      mode = parse_mode(mode_name_flag);
    } else if (meta.loss_weights) {
      mode = RunSpec::default_eval_mode(*meta.loss_weights);
    }
    ev = evaluate(net, *data, split, mode);
    return mode;
  };
  PredictionMode mode;
  if (precision == Precision::Float) {
    mode = run(load_checkpoint<float>(checkpoint, &meta));
  } else {
    mode = run(load_checkpoint<double>(checkpoint, &meta));
  }
  const std::string row = ev.metrics.csv_row(mode_name(mode));
  std::cout << MetricsReport::csv_header() << "\n" << row << "\n";
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    std::ofstream m(fs::path(f.out) / "metrics.csv");
    m << MetricsReport::csv_header() << "\n" << row << "\n";
    std::ofstream c(fs::path(f.out) / "confusion.csv");
    c << "truth\\pred";
    for (const auto& l : ev.confusion.classes.labels()) c << "," << l.token();
    c << ",outside\n";
    for (Index r = 0; r < ev.confusion.counts.rows(); ++r) {
      c << ev.confusion.classes[static_cast<std::size_t>(r)].token();
      for (Index k = 0; k < ev.confusion.counts.cols(); ++k) c << "," << ev.confusion.counts(r, k);
      c << "," << ev.confusion.outside[static_cast<std::size_t>(r)] << "\n";
    }
    if (!m || !c) throw std::runtime_error("cannot write to " + f.out);
  }
  return 0;
}

int cmd_curves(const std::string& out, const std::vector<std::string>& histories,
               const std::string& results) {
  std::vector<TrainingHistory> curves;
  std::vector<std::string> names;
  auto read = [](const fs::path& p) {
    std::ifstream is(p);
    if (!is) throw InputError("cannot open history " + p.string());
    try {
      return TrainingHistory::read_csv(is);
    } catch (const ParseError& e) {
      throw ParseError(p.string(), e);
    }
  };
  for (const auto& h : histories) {
    const auto eq = h.find('=');
    if (eq == std::string::npos) throw InputError("--history expects name=path, got '" + h + "'");
    names.push_back(h.substr(0, eq));
    curves.push_back(read(h.substr(eq + 1)));
  }
  if (!results.empty()) {
    // Runs in results-table order, each averaged over its seeds.
    std::ifstream table(fs::path(results) / "results.csv");
    if (!table) throw InputError("no results.csv in " + results);
    std::string line;
    std::getline(table, line);
    while (std::getline(table, line)) {
      const std::string run = line.substr(0, line.find(','));
      std::vector<TrainingHistory> seeds;
      std::vector<fs::path> dirs;
      for (const auto& entry : fs::directory_iterator(fs::path(results) / run)) {
        if (entry.is_directory() && fs::exists(entry.path() / "history.csv")) {
          dirs.push_back(entry.path());
        }
      }
      std::sort(dirs.begin(), dirs.end());
      for (const auto& d : dirs) seeds.push_back(read(d / "history.csv"));
      if (seeds.empty()) throw InputError("run '" + run + "' has no histories");
      names.push_back(run);
      curves.push_back(mean_history(seeds));
    }
  }
  const fs::path stem = fs::path(out) / "curves";
  emit_curves(curves, names, stem);
  std::cout << "wrote " << stem.string() << ".csv and .svg\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Jersey number recognition experiments on synthetic data"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, eval_f, cmp_f, abl_f, bb_f;
  std::string run_name, checkpoint, split = "test", mode, curves_out, results;
  std::vector<std::string> histories;

  auto* gen = app.add_subcommand("gen", "render a dataset to PNGs and a manifest");
  add_common(gen, gen_f);
  auto* trn = app.add_subcommand("train", "train one run (first seed unless --seed)");
  add_common(trn, train_f);
  trn->add_option("--run", run_name, "run name (default: the last run)");
  auto* evl = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  add_common(evl, eval_f, false);
  evl->add_option("-c,--checkpoint", checkpoint, "model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  evl->add_option("--split", split, "train, val or test");
  evl->add_option("--mode", mode, "holistic, digitwise, multitask or fused");
  auto* cmp = app.add_subcommand("compare", "holistic vs digit-wise vs multi-task table");
  add_common(cmp, cmp_f);
  auto* abl = app.add_subcommand("ablate", "loss-weight grid table");
  add_common(abl, abl_f);
  auto* bb = app.add_subcommand("backbones", "backbone sweep table");
  add_common(bb, bb_f);
  auto* crv = app.add_subcommand("curves", "validation-accuracy curves from histories");
  crv->add_option("-o,--out", curves_out, "output directory")->required();
  crv->add_option("--history", histories, "name=path of a history CSV (repeatable)");
  crv->add_option("--results", results, "experiment output directory")
      ->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen(gen_f);
    if (*trn) return cmd_train(train_f, run_name);
    if (*evl) return cmd_eval(eval_f, checkpoint, split, mode);
    if (*cmp) {
      print_table(run_comparison(load_spec(cmp_f), options_for(cmp_f)).table);
      return 0;
    }
    if (*abl) {
      const auto spec = load_spec(abl_f);
      const auto r = run_ablation(spec, options_for(abl_f));
      print_table(r.table);
      std::cout << "best: " << r.table.rows[r.table.best_row()].run << "\n";
      return 0;
    }
    if (*bb) {
      print_table(run_backbone_sweep(load_spec(bb_f), options_for(bb_f)).table);
      return 0;
    }
    if (*crv) {
      if (histories.empty() && results.empty()) {
        throw ConfigError("curves needs --history or --results");
      }
      return cmd_curves(curves_out, histories, results);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
