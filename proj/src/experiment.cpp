#include "jnr/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "jnr/checkpoint.hpp"
#include "jnr/errors.hpp"

namespace jnr {

namespace fs = std::filesystem;

std::string_view precision_name(Precision p) {
  return p == Precision::Float ? "float" : "double";
}

Precision parse_precision(std::string_view name) {
  if (name == "float" || name == "f32") return Precision::Float;
  if (name == "double" || name == "f64") return Precision::Double;
  throw InputError("unknown precision '" + std::string(name) + "' (expected float or double)");
}

ClassSet DatasetSpec::classes() const { return ClassSet::first_numbers(num_classes); }

ClassCounts DatasetSpec::counts() const {
  const ClassSet set = classes();
  ClassCounts c = imbalance_ratio == 1
                      ? uniform_counts(set, min_count)
                      : imbalanced_counts(set, min_count, imbalance_ratio, params.master_seed);
  if (null_count) c[JerseyLabel::null()] = *null_count;
  return c;
}

DatasetManifest DatasetSpec::manifest() const {
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(style_seeds));
  std::iota(seeds.begin(), seeds.end(), style_seed_base);
  return generate_dataset(classes(), counts(), std::move(seeds), params);
}

PredictionMode RunSpec::default_eval_mode(const LossWeights& w) {
  if (w == validate_weights(1, 0, 0)) return PredictionMode::Holistic;
  if (w.alpha() == 0.0) return PredictionMode::DigitWise;
  return PredictionMode::MultiTaskDefault;
}

namespace {

bool safe_name(const std::string& s) {
  if (s.empty() || s == "." || s == "..") return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

}  // namespace

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw ConfigError("[experiment] seeds must not be empty");
  const DatasetSpec& d = dataset;
  if (d.num_classes < 2 || d.num_classes > 101) {
    throw ConfigError("[dataset] classes must be in [2, 101]");
  }
  if (d.min_count < 1) throw ConfigError("[dataset] min_count must be positive");
  if (d.imbalance_ratio < 1) throw ConfigError("[dataset] imbalance_ratio must be >= 1");
  if (d.null_count && *d.null_count < 0) throw ConfigError("[dataset] null_count must be >= 0");
  if (d.style_seeds < 1) throw ConfigError("[dataset] style_seeds must be positive");
  if (d.params.image_height < 8 || d.params.image_width < 8) {
    throw ConfigError("[dataset] image_size must be at least 8");
  }
  train.validate();
  backbone.validate();
  std::set<std::string> names;
  for (const auto& r : runs) {
    if (!safe_name(r.name)) {
      throw ConfigError("run name '" + r.name + "' must use only letters, digits, '_', '-', '.'");
    }
    if (!names.insert(r.name).second) throw ConfigError("duplicate run name '" + r.name + "'");
    if (r.seeds.empty()) throw ConfigError("run '" + r.name + "' has no seeds");
    if (r.backbone.input_height != d.params.image_height ||
        r.backbone.input_width != d.params.image_width) {
      throw ConfigError("run '" + r.name + "' input size differs from the dataset images");
    }
    r.backbone.validate();
  }
}

void ExperimentSpec::override_seed(std::uint64_t seed) {
  seeds = {seed};
  for (auto& r : runs) r.seeds = {seed};
}

// ---------------------------------------------------------------- parsing

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> tokens(const std::string& value) {
  std::string v = value;
  std::replace(v.begin(), v.end(), ',', ' ');
  std::istringstream is(v);
  std::vector<std::string> out;
  for (std::string t; is >> t;) out.push_back(t);
  return out;
}

struct Entry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

template <typename Int>
Int parse_integer(const std::string& s, const Entry& e) {
  Int v{};
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw ParseError(e.key + ": expected an integer, got '" + s + "'", e.line);
  }
  return v;
}

double parse_number(const std::string& s, const Entry& e) {
  auto plain = [&](const std::string& t) {
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v)) {
      throw ParseError(e.key + ": expected a number, got '" + s + "'", e.line);
    }
    return v;
  };
  const auto slash = s.find('/');
  if (slash == std::string::npos) return plain(s);
  const double den = plain(s.substr(slash + 1));
  if (den == 0.0) throw ParseError(e.key + ": division by zero in '" + s + "'", e.line);
  return plain(s.substr(0, slash)) / den;
}

std::string single(const Entry& e) {
  const auto t = tokens(e.value);
  if (t.size() != 1) throw ParseError(e.key + ": expected one value", e.line);
  return t[0];
}

int as_int(const Entry& e) { return parse_integer<int>(single(e), e); }
std::uint64_t as_u64(const Entry& e) { return parse_integer<std::uint64_t>(single(e), e); }
double as_real(const Entry& e) { return parse_number(single(e), e); }

bool as_bool(const Entry& e) {
  const std::string v = single(e);
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ParseError(e.key + ": expected true or false, got '" + v + "'", e.line);
}

std::vector<int> as_ints(const Entry& e) {
  std::vector<int> out;
  for (const auto& t : tokens(e.value)) out.push_back(parse_integer<int>(t, e));
  return out;
}

std::vector<std::uint64_t> as_u64s(const Entry& e) {
  std::vector<std::uint64_t> out;
  for (const auto& t : tokens(e.value)) out.push_back(parse_integer<std::uint64_t>(t, e));
  if (out.empty()) throw ParseError(e.key + ": expected at least one value", e.line);
  return out;
}

std::vector<double> as_reals(const Entry& e, std::size_t n) {
  std::vector<double> out;
  for (const auto& t : tokens(e.value)) out.push_back(parse_number(t, e));
  if (out.size() != n) {
    throw ParseError(e.key + ": expected " + std::to_string(n) + " values", e.line);
  }
  return out;
}

[[noreturn]] void unknown_key(const std::string& section, const Entry& e) {
  throw ParseError("unknown key '" + e.key + "' in [" + section + "]", e.line);
}

// Keys shared by [backbone] and [runs.*]; returns false if `e` is not one.
bool backbone_key(BackboneConfig& b, const Entry& e) {
  if (e.key == "channels") {
    b.channels = as_ints(e);
  } else if (e.key == "blocks") {
    b.blocks = as_ints(e);
  } else if (e.key == "feature_dim") {
    b.feature_dim = as_int(e);
  } else if (e.key == "residual") {
    b.residual = as_bool(e);
  } else {
    return false;
  }
  return true;
}

struct Section {
  std::string name;
  std::size_t line = 0;
  std::vector<Entry> entries;
};

}  // namespace

ExperimentSpec parse_spec(std::istream& is) {
  std::vector<Section> sections;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("malformed section header", line_no);
      const std::string name = trim(line.substr(1, line.size() - 2));
      for (const auto& s : sections) {
        if (s.name == name) {
          throw ParseError("duplicate section [" + name + "] (first at line " +
                               std::to_string(s.line) + ")",
                           line_no);
        }
      }
      sections.push_back({name, line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    if (sections.empty()) throw ParseError("key outside any section", line_no);
    Entry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    if (e.key.empty()) throw ParseError("empty key", line_no);
    for (const auto& prev : sections.back().entries) {
      if (prev.key == e.key) throw ParseError("duplicate key '" + e.key + "'", line_no);
    }
    sections.back().entries.push_back(std::move(e));
  }

  ExperimentSpec spec;
  std::optional<Entry> milestones;
  const Section* backbone_section = nullptr;
  std::vector<const Section*> run_sections;
  for (const auto& s : sections) {
    if (s.name == "experiment") {
      for (const auto& e : s.entries) {
        if (e.key == "output_dir") {
          if (e.value.empty()) throw ParseError("output_dir: empty path", e.line);
          spec.output_dir = e.value;
        } else if (e.key == "precision") {
          try {
            spec.precision = parse_precision(single(e));
          } catch (const InputError& err) {
            throw ParseError(err.what(), e.line);
          }
        } else if (e.key == "seeds") {
          spec.seeds = as_u64s(e);
        } else {
          unknown_key(s.name, e);
        }
      }
    } else if (s.name == "dataset") {
      DatasetSpec& d = spec.dataset;
      for (const auto& e : s.entries) {
        if (e.key == "classes") {
          d.num_classes = as_int(e);
        } else if (e.key == "min_count") {
          d.min_count = as_int(e);
        } else if (e.key == "imbalance_ratio") {
          d.imbalance_ratio = as_int(e);
        } else if (e.key == "null_count") {
          d.null_count = as_int(e);
        } else if (e.key == "style_seeds") {
          d.style_seeds = as_int(e);
        } else if (e.key == "style_seed_base") {
          d.style_seed_base = as_u64(e);
        } else if (e.key == "image_size") {
          const auto v = as_ints(e);
          if (v.size() != 1 && v.size() != 2) {
            throw ParseError("image_size: expected 'size' or 'height width'", e.line);
          }
          d.params.image_height = v[0];
          d.params.image_width = v.back();
        } else if (e.key == "split_ratios") {
          const auto v = as_reals(e, 3);
          d.params.ratios = {v[0], v[1], v[2]};
        } else if (e.key == "master_seed") {
          d.params.master_seed = as_u64(e);
        } else if (e.key == "occlusion_probability") {
          d.params.occlusion_probability = as_real(e);
        } else if (e.key == "occlusion_max") {
          d.params.occlusion_max = as_real(e);
        } else if (e.key == "blur_max") {
          d.params.blur_max = as_real(e);
        } else {
          unknown_key(s.name, e);
        }
      }
    } else if (s.name == "train") {
      TrainConfig& t = spec.train;
      for (const auto& e : s.entries) {
        if (e.key == "iterations") {
          t.total_iterations = as_int(e);
        } else if (e.key == "batch_size") {
          t.batch_size = as_int(e);
        } else if (e.key == "base_lr") {
          t.base_lr = as_real(e);
        } else if (e.key == "lr_decay_factor") {
          t.lr_decay_factor = as_real(e);
        } else if (e.key == "lr_milestones") {
          milestones = e;
        } else if (e.key == "weight_decay") {
          t.weight_decay = as_real(e);
        } else if (e.key == "validation_interval") {
          t.validation_interval = as_int(e);
        } else if (e.key == "hue_jitter") {
          t.hue_jitter = as_real(e);
        } else {
          unknown_key(s.name, e);
        }
      }
    } else if (s.name == "backbone") {
      backbone_section = &s;
    } else if (s.name.starts_with("runs.")) {
      run_sections.push_back(&s);
    } else {
      throw ParseError("unknown section [" + s.name + "]", s.line);
    }
  }

  if (!milestones || trim(milestones->value) == "proportional") {
    spec.train.lr_milestones = proportional_milestones(spec.train.total_iterations);
  } else {
    spec.train.lr_milestones = as_ints(*milestones);
  }

  spec.backbone.input_height = spec.dataset.params.image_height;
  spec.backbone.input_width = spec.dataset.params.image_width;
  if (backbone_section) {
    for (const auto& e : backbone_section->entries) {
      if (!backbone_key(spec.backbone, e)) unknown_key("backbone", e);
    }
  }

  for (const Section* s : run_sections) {
    RunSpec run;
    run.name = s->name.substr(5);
    run.backbone = spec.backbone;
    bool has_seeds = false;
    for (const auto& e : s->entries) {
      if (e.key == "weights") {
        const auto w = as_reals(e, 3);
        try {
          run.weights = validate_weights(w[0], w[1], w[2]);
        } catch (const WeightSimplexError& err) {
          throw ParseError("run '" + run.name + "': " + err.what(), e.line);
        }
      } else if (e.key == "seeds") {
        run.seeds = as_u64s(e);
        has_seeds = true;
      } else if (e.key == "eval_mode") {
        try {
          run.eval_mode = parse_mode(single(e));
        } catch (const InputError& err) {
          throw ParseError(err.what(), e.line);
        }
      } else if (!backbone_key(run.backbone, e)) {
        unknown_key(s->name, e);
      }
    }
    if (!has_seeds) throw ParseError("run '" + run.name + "' has no seeds", s->line);
    spec.runs.push_back(std::move(run));
  }

  spec.validate();
  return spec;
}

ExperimentSpec parse_spec_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open spec file " + path.string());
  try {
    return parse_spec(is);
  } catch (const ParseError& e) {
    throw ParseError(path.string(), e);
  }
}

namespace {

std::string real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename Seq>
std::string join(const Seq& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ' ';
    out += std::to_string(v);
  }
  return out;
}

void write_backbone(std::ostream& os, const BackboneConfig& b) {
  os << "channels = " << join(b.channels) << "\n"
     << "blocks = " << join(b.blocks) << "\n"
     << "feature_dim = " << b.feature_dim << "\n"
     << "residual = " << (b.residual ? "true" : "false") << "\n";
}

}  // namespace

std::string ExperimentSpec::serialize() const {
  std::ostringstream os;
  const auto& d = dataset;
  const auto& p = d.params;
  os << "[experiment]\n"
     << "output_dir = " << output_dir.string() << "\n"
     << "precision = " << precision_name(precision) << "\n"
     << "seeds = " << join(seeds) << "\n\n";
  os << "[dataset]\n"
     << "classes = " << d.num_classes << "\n"
     << "min_count = " << d.min_count << "\n"
     << "imbalance_ratio = " << d.imbalance_ratio << "\n";
  if (d.null_count) os << "null_count = " << *d.null_count << "\n";
  os << "style_seeds = " << d.style_seeds << "\n"
     << "style_seed_base = " << d.style_seed_base << "\n"
     << "image_size = " << p.image_height << " " << p.image_width << "\n"
     << "split_ratios = " << real(p.ratios.train) << " " << real(p.ratios.val) << " "
     << real(p.ratios.test) << "\n"
     << "master_seed = " << p.master_seed << "\n"
     << "occlusion_probability = " << real(p.occlusion_probability) << "\n"
     << "occlusion_max = " << real(p.occlusion_max) << "\n"
     << "blur_max = " << real(p.blur_max) << "\n\n";
  os << "[train]\n"
     << "iterations = " << train.total_iterations << "\n"
     << "batch_size = " << train.batch_size << "\n"
     << "base_lr = " << real(train.base_lr) << "\n"
     << "lr_decay_factor = " << real(train.lr_decay_factor) << "\n"
     << "lr_milestones = " << join(train.lr_milestones) << "\n"
     << "weight_decay = " << real(train.weight_decay) << "\n"
     << "validation_interval = " << train.validation_interval << "\n"
     << "hue_jitter = " << real(train.hue_jitter) << "\n\n";
  os << "[backbone]\n";
  write_backbone(os, backbone);
  for (const auto& r : runs) {
    os << "\n[runs." << r.name << "]\n"
       << "weights = " << real(r.weights.alpha()) << " " << real(r.weights.beta()) << " "
       << real(r.weights.gamma()) << "\n"
       << "seeds = " << join(r.seeds) << "\n";
    if (r.eval_mode) os << "eval_mode = " << mode_name(*r.eval_mode) << "\n";
    write_backbone(os, r.backbone);
  }
  return os.str();
}

// ------------------------------------------------------------ run lists

namespace {

RunSpec generated_run(const ExperimentSpec& spec, std::string name, LossWeights w) {
  RunSpec r;
  r.name = std::move(name);
  r.weights = w;
  r.backbone = spec.backbone;
  r.seeds = spec.seeds;
  return r;
}

}  // namespace

std::vector<RunSpec> comparison_runs(const ExperimentSpec& spec) {
  const std::vector<std::pair<std::string, LossWeights>> settings{
      {"Holistic", validate_weights(1, 0, 0)},
      {"DigitWise", validate_weights(0, 0.5, 0.5)},
      {"MultiTask", validate_weights(0.3, 0.35, 0.35)}};
  std::vector<RunSpec> out;
  if (spec.runs.empty()) {
    for (const auto& [name, w] : settings) out.push_back(generated_run(spec, name, w));
    return out;
  }
  if (spec.runs.size() != settings.size()) {
    throw ConfigError("a comparison needs exactly three runs weighted (1,0,0), (0,0.5,0.5) "
                      "and (0.3,0.35,0.35); the spec has " +
                      std::to_string(spec.runs.size()));
  }
  for (const auto& [name, w] : settings) {
    const auto it = std::find_if(spec.runs.begin(), spec.runs.end(),
                                 [&](const RunSpec& r) { return r.weights == w; });
    if (it == spec.runs.end()) {
      throw ConfigError("comparison is missing the " + name + " run weighted " + w.to_string());
    }
    out.push_back(*it);
  }
  return out;
}

std::vector<LossWeights> ablation_grid() {
  return {validate_weights(1, 0, 0),
          validate_weights(0.8, 0.1, 0.1),
          validate_weights(0.5, 0.25, 0.25),
          validate_weights(1.0 / 3, 1.0 / 3, 1.0 / 3),
          validate_weights(0.3, 0.35, 0.35),
          validate_weights(0.2, 0.4, 0.4),
          validate_weights(0.1, 0.45, 0.45),
          validate_weights(0, 0.5, 0.5)};
}

std::vector<RunSpec> ablation_runs(const ExperimentSpec& spec) {
  const auto grid = ablation_grid();
  if (!spec.runs.empty()) {
    bool match = spec.runs.size() == grid.size();
    for (std::size_t i = 0; match && i < grid.size(); ++i) match = spec.runs[i].weights == grid[i];
    if (!match) {
      throw ConfigError("ablation runs must be empty or list the eight grid triples in order");
    }
    return spec.runs;
  }
  std::vector<RunSpec> out;
  for (const auto& w : grid) {
    char name[64];
    std::snprintf(name, sizeof name, "a%.4g_b%.4g_g%.4g", w.alpha(), w.beta(), w.gamma());
    out.push_back(generated_run(spec, name, w));
  }
  return out;
}

// ------------------------------------------------------------ results

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) throw InputError("mean of no values");
  MeanStd r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

ResultRow summarize(const RunOutcome& outcome) {
  ResultRow row;
  row.run = outcome.run.name;
  row.weights = outcome.run.weights;
  row.mode = outcome.run.resolved_eval_mode();
  row.parameters = outcome.parameters;
  row.seeds = static_cast<int>(outcome.seeds.size());
  std::vector<double> a, p, r, f;
  for (const auto& s : outcome.seeds) {
    a.push_back(s.metrics.accuracy);
    p.push_back(s.metrics.macro_precision);
    r.push_back(s.metrics.macro_recall);
    f.push_back(s.metrics.macro_f1);
  }
  row.accuracy = mean_std(a);
  row.precision = mean_std(p);
  row.recall = mean_std(r);
  row.f1 = mean_std(f);
  return row;
}

std::string ResultsTable::csv_header() {
  return "run,alpha,beta,gamma,mode,parameters,seeds,accuracy_mean,accuracy_std,"
         "precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std,manifest_hash";
}

namespace {

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void ResultsTable::write_csv(std::ostream& os) const {
  os << csv_header() << "\n";
  for (const auto& r : rows) {
    os << r.run << "," << fixed6(r.weights.alpha()) << "," << fixed6(r.weights.beta()) << ","
       << fixed6(r.weights.gamma()) << "," << mode_name(r.mode) << "," << r.parameters << ","
       << r.seeds << "," << fixed6(r.accuracy.mean) << "," << fixed6(r.accuracy.std) << ","
       << fixed6(r.precision.mean) << "," << fixed6(r.precision.std) << ","
       << fixed6(r.recall.mean) << "," << fixed6(r.recall.std) << "," << fixed6(r.f1.mean)
       << "," << fixed6(r.f1.std) << "," << manifest_hash << "\n";
  }
}

std::size_t ResultsTable::best_row() const {
  if (rows.empty()) throw InputError("best_row of an empty table");
  std::size_t best = 0;
  double best_acc = std::stod(fixed6(rows[0].accuracy.mean));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double acc = std::stod(fixed6(rows[i].accuracy.mean));
    if (acc > best_acc) {
      best = i;
      best_acc = acc;
    }
  }
  return best;
}

// ------------------------------------------------------------ running

Dataset experiment_dataset(const ExperimentSpec& spec, const ExperimentOptions& options) {
  if (options.data_dir) {
    Dataset data = Dataset::load(*options.data_dir);
    if (data.height() != spec.dataset.params.image_height ||
        data.width() != spec.dataset.params.image_width) {
      throw ConfigError("dataset in " + options.data_dir->string() +
                        " has a different image size from the spec");
    }
    return data;
  }
  return Dataset::render(spec.dataset.manifest());
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

template <typename Scalar>
SeedOutcome train_seed(const ExperimentSpec& spec, const RunSpec& run, std::uint64_t seed,
                       const Dataset& data, const fs::path& dir, std::ostream* log) {
  JerseyNet<Scalar> net(run.backbone, data.classes(), seed);
  TrainConfig cfg = spec.train;
  cfg.loss_weights = run.weights;
  cfg.seed = seed;
  cfg.validation_mode = run.resolved_eval_mode();
  const auto start = std::chrono::steady_clock::now();
  TrainObserver observer;
  if (log) {
    observer = [&](const HistoryRecord& r) {
      const double s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      char buf[160];
      std::snprintf(buf, sizeof buf, "  [%s seed %llu] iter %d loss %.4f val %.4f (%.0fs)\n",
                    run.name.c_str(), static_cast<unsigned long long>(seed), r.iteration,
                    r.train_loss.total, r.val_accuracy, s);
      *log << buf << std::flush;
    };
  }
  TrainResult<Scalar> result = train(std::move(net), data, cfg, observer);
  const Evaluation ev = evaluate(result.best, data, Split::Test, run.resolved_eval_mode());

  fs::create_directories(dir);
  save_checkpoint(dir / "model.ckpt", result.best,
                  CheckpointMeta{result.best_iteration, run.weights});
  std::ostringstream hist;
  result.history.write_csv(hist);
  write_file(dir / "history.csv", hist.str());
  return {seed, result.best_iteration, ev.metrics, std::move(result.history)};
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const std::vector<RunSpec>& runs,
                                const Dataset& data, const ExperimentOptions& options) {
  spec.validate();
  if (runs.empty()) throw ConfigError("experiment has no runs");
  const fs::path out = spec.output_dir;
  fs::create_directories(out);
  std::ostringstream manifest;
  data.manifest().save(manifest);
  write_file(out / "manifest.txt", manifest.str());
  write_file(out / "spec.txt", spec.serialize());

  ExperimentResult result;
  result.table.manifest_hash = data.manifest().content_hash();
  for (const RunSpec& run : runs) {
    RunOutcome outcome;
    outcome.run = run;
    std::string metrics = MetricsReport::csv_header() + "\n";
    for (std::uint64_t seed : run.seeds) {
      if (options.log) *options.log << "run " << run.name << " seed " << seed << "\n";
      const fs::path dir = out / run.name / ("seed_" + std::to_string(seed));
      try {
        if (outcome.parameters == 0) {
          outcome.parameters = JerseyNet<float>(run.backbone, data.classes(), 0).parameter_count();
        }
        SeedOutcome s = spec.precision == Precision::Float
                            ? train_seed<float>(spec, run, seed, data, dir, options.log)
                            : train_seed<double>(spec, run, seed, data, dir, options.log);
        metrics += s.metrics.csv_row("seed_" + std::to_string(seed)) + "\n";
        outcome.seeds.push_back(std::move(s));
      } catch (const ValidationError& e) {
        throw ConfigError("run '" + run.name + "' seed " + std::to_string(seed) + ": " + e.what());
      } catch (const std::exception& e) {
        throw std::runtime_error("run '" + run.name + "' seed " + std::to_string(seed) + ": " +
                                 e.what());
      }
    }
    write_file(out / run.name / "metrics.csv", metrics);
    result.table.rows.push_back(summarize(outcome));
    result.runs.push_back(std::move(outcome));
  }

  std::ostringstream table;
  result.table.write_csv(table);
  write_file(out / "results.csv", table.str());

  std::vector<TrainingHistory> curves;
  std::vector<std::string> names;
  for (const auto& r : result.runs) {
    std::vector<TrainingHistory> h;
    for (const auto& s : r.seeds) h.push_back(s.history);
    curves.push_back(mean_history(h));
    names.push_back(r.run.name);
  }
  emit_curves(curves, names, out / "curves");
  return result;
}

ExperimentResult run_comparison(const ExperimentSpec& spec, const ExperimentOptions& options) {
  const auto runs = comparison_runs(spec);
  const Dataset data = experiment_dataset(spec, options);
  return run_experiment(spec, runs, data, options);
}

ExperimentResult run_ablation(const ExperimentSpec& spec, const ExperimentOptions& options) {
  const auto runs = ablation_runs(spec);
  const Dataset data = experiment_dataset(spec, options);
  ExperimentResult result = run_experiment(spec, runs, data, options);
  const ResultRow& best = result.table.rows[result.table.best_row()];
  write_file(spec.output_dir / "best.txt",
             best.run + " " + best.weights.to_string() + " accuracy " +
                 fixed6(best.accuracy.mean) + "\n");
  return result;
}

ExperimentResult run_backbone_sweep(const ExperimentSpec& spec,
                                    const ExperimentOptions& options) {
  if (spec.runs.size() < 2) throw ConfigError("a backbone sweep needs at least two runs");
  const LossWeights fixed = validate_weights(0.3, 0.35, 0.35);
  std::set<std::string> shapes;
  for (const auto& r : spec.runs) {
    if (!(r.weights == fixed)) {
      throw ConfigError("backbone sweep run '" + r.name + "' must use weights " +
                        fixed.to_string());
    }
    shapes.insert(backbone_to_json(r.backbone));
  }
  if (shapes.size() < 2) throw ConfigError("backbone sweep runs all share one backbone");
  const Dataset data = experiment_dataset(spec, options);
  return run_experiment(spec, spec.runs, data, options);
}

// ------------------------------------------------------------ curves

TrainingHistory mean_history(const std::vector<TrainingHistory>& seeds) {
  if (seeds.empty()) throw InputError("mean_history of no histories");
  TrainingHistory out = seeds[0];
  for (std::size_t s = 1; s < seeds.size(); ++s) {
    if (seeds[s].records.size() != out.records.size()) {
      throw InputError("histories have different lengths");
    }
    for (std::size_t i = 0; i < out.records.size(); ++i) {
      const auto& r = seeds[s].records[i];
      auto& m = out.records[i];
      if (r.iteration != m.iteration) throw InputError("histories record different iterations");
      m.val_accuracy += r.val_accuracy;
      m.train_loss.total += r.train_loss.total;
      m.train_loss.holistic += r.train_loss.holistic;
      m.train_loss.digit1 += r.train_loss.digit1;
      m.train_loss.digit2 += r.train_loss.digit2;
      m.train_loss.digitwise += r.train_loss.digitwise;
    }
  }
  const double n = static_cast<double>(seeds.size());
  for (auto& m : out.records) {
    m.val_accuracy /= n;
    m.train_loss.total /= n;
    m.train_loss.holistic /= n;
    m.train_loss.digit1 /= n;
    m.train_loss.digit2 /= n;
    m.train_loss.digitwise /= n;
  }
  return out;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void emit_curves(const std::vector<TrainingHistory>& histories,
                 const std::vector<std::string>& names, const fs::path& stem) {
  if (histories.empty()) throw InputError("emit_curves: no histories");
  if (histories.size() != names.size()) {
    throw InputError("emit_curves: " + std::to_string(histories.size()) + " histories but " +
                     std::to_string(names.size()) + " names");
  }
  std::set<int> iterations;
  int max_iter = 1;
  for (std::size_t i = 0; i < histories.size(); ++i) {
    if (histories[i].records.empty()) {
      throw InputError("emit_curves: history '" + names[i] + "' has no records");
    }
    for (const auto& r : histories[i].records) {
      iterations.insert(r.iteration);
      max_iter = std::max(max_iter, r.iteration);
    }
  }

  std::ostringstream csv;
  csv << "iteration";
  for (const auto& n : names) csv << "," << n;
  csv << "\n";
  for (int it : iterations) {
    csv << it;
    for (const auto& h : histories) {
      csv << ",";
      const auto r = std::find_if(h.records.begin(), h.records.end(),
                                  [&](const HistoryRecord& x) { return x.iteration == it; });
      if (r != h.records.end()) csv << fixed6(r->val_accuracy);
    }
    csv << "\n";
  }
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  write_file(fs::path(stem).concat(".csv"), csv.str());

  // Plot area [left, left+w] x [top, top+h]; accuracy 0..1 on y.
  const double left = 60, top = 20, w = 520, h = 300;
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                           "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  std::ostringstream svg;
  char buf[256];
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"380\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.0f\" y=\"%.0f\" width=\"%.0f\" height=\"%.0f\" fill=\"none\" "
                "stroke=\"#444\"/>\n",
                left, top, w, h);
  svg << buf;
  for (int t = 0; t <= 5; ++t) {
    const double y = top + h - h * t / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.0f\" y=\"%.1f\" text-anchor=\"end\">%.1f</text>\n", left - 6,
                  y + 4, t / 5.0);
    svg << buf;
    const double x = left + w * t / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.0f\" text-anchor=\"middle\">%d</text>\n", x,
                  top + h + 16, static_cast<int>(std::lround(max_iter * t / 5.0)));
    svg << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.0f\" y=\"%.0f\" text-anchor=\"middle\">Iterations</text>\n",
                left + w / 2, top + h + 36);
  svg << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"16\" y=\"%.0f\" text-anchor=\"middle\" "
                "transform=\"rotate(-90 16 %.0f)\">Validation accuracy</text>\n",
                top + h / 2, top + h / 2);
  svg << buf;
  for (std::size_t i = 0; i < histories.size(); ++i) {
    const char* colour = palette[i % 8];
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (const auto& r : histories[i].records) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", first ? "" : " ",
                    left + w * r.iteration / max_iter, top + h - h * r.val_accuracy);
      svg << buf;
      first = false;
    }
    svg << "\"/>\n";
    const double ly = top + 14 + 16.0 * static_cast<double>(i);
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.0f\" y1=\"%.0f\" x2=\"%.0f\" y2=\"%.0f\" stroke=\"%s\" "
                  "stroke-width=\"2\"/>\n",
                  left + w + 10, ly - 4, left + w + 30, ly - 4, colour);
    svg << buf;
    svg << "<text x=\"" << left + w + 34 << "\" y=\"" << ly << "\">" << xml_escape(names[i])
        << "</text>\n";
  }
  svg << "</svg>\n";
  write_file(fs::path(stem).concat(".svg"), svg.str());
}

}  // namespace jnr
