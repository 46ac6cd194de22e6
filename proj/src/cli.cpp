#include "tdpmix/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "tdpmix/ba.hpp"
#include "tdpmix/checkpoint.hpp"
#include "tdpmix/data.hpp"
#include "tdpmix/distributed.hpp"
#include "tdpmix/jac.hpp"
#include "tdpmix/metrics.hpp"

namespace tdpmix {
namespace {

namespace fs = std::filesystem;

// Raised for anything that prevents reading the inputs (exit 2).
class DataFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Report {
 public:
  template <class T>
  void add(const std::string& key, const T& value) {
    if constexpr (std::is_floating_point_v<T>) {
      lines_ += key + "\t" + fmt(value) + "\n";
    } else if constexpr (std::is_arithmetic_v<T>) {
      lines_ += key + "\t" + std::to_string(value) + "\n";
    } else {
      lines_ += key + "\t" + std::string(value) + "\n";
    }
  }
  const std::string& text() const { return lines_; }

 private:
  std::string lines_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error("cannot write " + path.string());
}

std::string csv_rows(std::span<const Vector> rows) {
  std::string out;
  for (const Vector& r : rows) {
    for (std::size_t d = 0; d < r.size(); ++d) {
      if (d) out += ',';
      out += fmt(r[d]);
    }
    out += '\n';
  }
  return out;
}

std::string int_lines(std::span<const int> v) {
  std::string out;
  for (int x : v) out += std::to_string(x) + "\n";
  return out;
}

void write_pgm(const fs::path& path, const Vector& values, int width, int height) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (double v : values) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  write_text(path, out);
}

// Output directory written under a sibling temporary name and renamed into
// place on success, so a failed run leaves no partial results.
class StagedOutput {
 public:
  explicit StagedOutput(fs::path target) : target_(std::move(target)) {
    if (target_.empty()) throw ConfigError("--output is required");
    fs::path parent = target_.parent_path();
    if (parent.empty()) parent = ".";
    if (!fs::is_directory(parent)) {
      throw ConfigError("output parent directory does not exist: " + parent.string());
    }
    staging_ = parent / ("." + target_.filename().string() + ".partial");
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  ~StagedOutput() {
    std::error_code ec;
    if (!committed_) fs::remove_all(staging_, ec);
  }
  StagedOutput(const StagedOutput&) = delete;
  StagedOutput& operator=(const StagedOutput&) = delete;

  fs::path operator/(const std::string& name) const { return staging_ / name; }

  void commit() {
    if (fs::exists(target_)) fs::remove_all(target_);
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

// ---------------------------------------------------------------------------
// Shared option groups

struct InputOptions {
  std::string input;
  std::string format;
  std::string labels;
  std::vector<int> classes;
  int per_class = 0;
};

void add_input_options(CLI::App* app, InputOptions& o) {
  app->add_option("-i,--input,--in", o.input,
                  "Dataset path (relative paths also tried under TDPMIX_DATA_DIR)");
  app->add_option("--format", o.format, "csv-curves, csv-points, pgm-dir, idx or mnist")
      ->check(CLI::IsMember({"csv-curves", "csv-points", "pgm-dir", "idx", "mnist"}));
  app->add_option("--labels", o.labels, "Ground-truth labels (idx or one integer per line)");
  app->add_option("--classes", o.classes, "Keep only these labels")->delimiter(',');
  app->add_option("--per-class", o.per_class, "Items kept per class (with --classes)")
      ->check(CLI::NonNegativeNumber);
}

fs::path resolve_input(const std::string& raw) {
  fs::path p(raw);
  if (fs::exists(p) || p.is_absolute()) return p;
  if (const char* root = std::getenv("TDPMIX_DATA_DIR"); root && *root) {
    fs::path alt = fs::path(root) / p;
    if (fs::exists(alt)) return alt;
  }
  return p;
}

std::string guess_format(const fs::path& p) {
  if (fs::is_directory(p)) {
    return fs::exists(p / "train-images-idx3-ubyte") ? "mnist" : "pgm-dir";
  }
  const std::string ext = p.extension().string();
  if (ext == ".csv" || ext == ".txt") return "csv-curves";
  return "idx";
}

Dataset load_input(const InputOptions& o, std::string* format_used = nullptr) {
  if (o.input.empty()) throw ConfigError("--input is required");
  const fs::path path = resolve_input(o.input);
  if (!fs::exists(path)) throw DataFailure("input not found: " + path.string());
  const std::string format = o.format.empty() ? guess_format(path) : o.format;
  if (format_used) *format_used = format;
  Dataset data;
  try {
    if (format == "mnist") {
      data = load_mnist(path);
    } else {
      data = load_dataset(path, data_format_from_string(format));
    }
    if (!o.labels.empty()) {
      const fs::path lp = resolve_input(o.labels);
      if (!fs::exists(lp)) throw DataFailure("labels not found: " + lp.string());
      data.labels = load_labels(lp);
    }
    data.validate();
    if (!o.classes.empty()) {
      if (data.labels.empty()) throw ConfigError("--classes needs labels");
      const int per = o.per_class > 0 ? o.per_class : static_cast<int>(data.size());
      data = select_classes(data, o.classes, per);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const DataFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw DataFailure(e.what());
  }
  if (data.items.empty()) throw DataFailure("no items in " + path.string());
  return data;
}

struct ModelOptions {
  std::string family;
  std::string features;
  double beta_a = 1.0, beta_b = 1.0;
  double mu0 = 0.0, kappa0 = 0.01, a0 = 1.0, b0 = 0.1;
  double transform_a = Hyperparams{}.transform_a;
  double transform_scale = Hyperparams{}.transform_prior_scale;
  double gamma_shape = 1.0, gamma_rate = 1.0;
};

void add_model_options(CLI::App* app, ModelOptions& m) {
  app->add_option("--family", m.family,
                  "identity, rotation2d, affine7, curve14 or curve13-noamp (default by data kind)");
  app->add_option("--features", m.features, "Feature map applied after alignment (none or hog)");
  const auto pos = CLI::PositiveNumber;
  app->add_option("--beta-a", m.beta_a, "Beta prior a for pixels")->check(pos);
  app->add_option("--beta-b", m.beta_b, "Beta prior b for pixels")->check(pos);
  app->add_option("--mu0", m.mu0, "Gaussian prior mean");
  app->add_option("--kappa0", m.kappa0, "Gaussian prior mean strength")->check(pos);
  app->add_option("--a0", m.a0, "Gaussian prior variance shape")->check(pos);
  app->add_option("--b0", m.b0, "Gaussian prior variance scale (times data variance)")->check(pos);
  app->add_option("--transform-a", m.transform_a, "Inverse-Gamma shape on transform variances")
      ->check(pos);
  app->add_option("--transform-scale", m.transform_scale,
                  "Prior transform std mode as a multiple of the family's scale hints")
      ->check(pos);
  app->add_option("--gamma-shape", m.gamma_shape, "Gamma hyperprior shape on concentration")
      ->check(pos);
  app->add_option("--gamma-rate", m.gamma_rate, "Gamma hyperprior rate on concentration")
      ->check(pos);
}

std::string default_family(DataKind kind) {
  switch (kind) {
    case DataKind::points2d: return "rotation2d";
    case DataKind::curves: return "curve14";
    case DataKind::images: return "affine7";
  }
  return "identity";
}

double median_range(const Dataset& data) {
  std::vector<double> ranges;
  for (const DataItem& it : data.items) {
    const auto [lo, hi] = std::minmax_element(it.values.begin(), it.values.end());
    ranges.push_back(*hi - *lo);
  }
  std::sort(ranges.begin(), ranges.end());
  const double r = ranges[(ranges.size() - 1) / 2];
  return r > 0.0 ? r : 1.0;
}

ModelPtr build_model(const ModelOptions& m, const Dataset& data) {
  const std::string family_name = m.family.empty() ? default_family(data.kind) : m.family;
  FamilyShape shape{data.width, data.height, 1.0};
  if (data.kind == DataKind::curves) shape.amplitude_scale = median_range(data);
  FamilyPtr family = make_family(family_name, shape);
  FeatureMap features = feature_map_by_name(m.features, data.kind, data.width, data.height);

  Hyperparams h;
  h.bernoulli = {m.beta_a, m.beta_b};
  h.gaussian = {m.mu0, m.kappa0, m.a0, m.b0};
  if (features) {
    std::vector<DataItem> mapped;
    mapped.reserve(data.size());
    for (const DataItem& it : data.items) mapped.push_back(make_curve(features.fn(it)));
    h.gaussian = scale_gaussian_prior(h.gaussian, mapped);
  } else {
    h.gaussian = scale_gaussian_prior(h.gaussian, data.items);
  }
  h.transform_a = m.transform_a;
  h.transform_prior_scale = m.transform_scale;
  h.gamma_shape = m.gamma_shape;
  h.gamma_rate = m.gamma_rate;
  return std::make_shared<const Model>(std::move(family), data.kind, data.items.front().size(), h,
                                       std::move(features));
}

// Items mapped back into data space (independent of any feature map).
std::vector<Vector> warped_items(const Model& model, std::span<const DataItem> items,
                                 std::span<const Params> rho) {
  std::vector<Vector> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    out.push_back(model.family().apply_inverse(items[i], rho[i]).values);
  }
  return out;
}

Vector mean_of(std::span<const Vector> rows, std::span<const int> z = {}, int id = 0) {
  Vector m;
  std::size_t n = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!z.empty() && z[i] != id) continue;
    if (m.empty()) m.assign(rows[i].size(), 0.0);
    for (std::size_t d = 0; d < m.size(); ++d) m[d] += rows[i][d];
    ++n;
  }
  for (double& v : m) v /= static_cast<double>(std::max<std::size_t>(n, 1));
  return m;
}

std::vector<Vector> raw_values(const Dataset& data) {
  std::vector<Vector> out;
  for (const DataItem& it : data.items) out.push_back(it.values);
  return out;
}

void write_aligned(const StagedOutput& out, const Dataset& like, const std::string& format,
                   std::span<const Vector> rows) {
  Dataset d;
  d.kind = like.kind;
  d.width = like.width;
  d.height = like.height;
  for (const Vector& r : rows) {
    DataItem it = like.items.front();
    it.values = r;
    if (it.kind == DataKind::images) {
      for (double& v : it.values) v = std::clamp(v, 0.0, 1.0);
    }
    d.items.push_back(std::move(it));
  }
  switch (like.kind) {
    case DataKind::images:
      if (format == "pgm-dir") {
        save_dataset(d, out / "aligned", DataFormat::pgm_dir);
      } else {
        save_dataset(d, out / "aligned.idx", DataFormat::idx);
      }
      break;
    case DataKind::curves:
    case DataKind::points2d:
      write_text(out / "aligned.csv", csv_rows(rows));
      break;
  }
}

void add_shape_metrics(Report& report, const std::string& prefix, DataKind kind,
                       std::span<const Vector> rows) {
  if (rows.size() < 2) return;
  if (kind == DataKind::images) {
    std::vector<Vector> clamped(rows.begin(), rows.end());
    for (Vector& r : clamped) {
      for (double& v : r) v = std::clamp(v, 0.0, 1.0);
    }
    report.add("entropy_" + prefix, mean_pixel_entropy(clamped));
  } else if (kind == DataKind::curves) {
    report.add("stddev_score_" + prefix, stddev_score(rows));
  }
}

// ---------------------------------------------------------------------------
// ba

struct BaConfig {
  InputOptions input;
  ModelOptions model;
  std::string output;
  int iters = 30;
  double tol = 1e-4;
  std::uint64_t seed = 1;
};

int run_ba_cmd(const BaConfig& c, std::ostream& out) {
  StagedOutput staged(c.output);
  std::string format;
  const Dataset data = load_input(c.input, &format);
  const ModelPtr model = build_model(c.model, data);

  BAState state(model, data.items, c.seed);
  BAOptions options;
  options.max_sweeps = c.iters;
  options.rel_tol = c.tol;
  const BATrace trace = run_ba(state, options);

  const std::vector<Vector> before = raw_values(data);
  const std::vector<Vector> after = warped_items(*model, data.items, state.rho);
  const std::vector<int> one(data.size(), 0);

  Report r;
  r.add("command", "ba");
  r.add("items", data.size());
  r.add("family", model->family().name());
  r.add("sweeps", trace.sweeps);
  r.add("converged", trace.converged ? 1 : 0);
  r.add("joint_score_initial", trace.joint_scores.front());
  r.add("joint_score_final", trace.joint_scores.back());
  add_shape_metrics(r, "before", data.kind, before);
  add_shape_metrics(r, "after", data.kind, after);
  if (data.size() >= 2) {
    r.add("alignment_before", alignment_score(before, one).mean);
    r.add("alignment_after", alignment_score(after, one).mean);
  }

  write_text(staged / "rho.csv", csv_rows(state.rho));
  write_aligned(staged, data, format, after);
  const Vector mean = mean_of(after);
  if (data.kind == DataKind::images) {
    write_pgm(staged / "mean.pgm", mean, data.width, data.height);
  } else {
    write_text(staged / "mean.csv", csv_rows(std::span<const Vector>(&mean, 1)));
  }
  std::string tr = "sweep,joint_score\n";
  for (std::size_t k = 0; k < trace.joint_scores.size(); ++k) {
    tr += std::to_string(k) + "," + fmt(trace.joint_scores[k]) + "\n";
  }
  write_text(staged / "trace.csv", tr);
  write_text(staged / "report.tsv", r.text());
  staged.commit();
  out << r.text();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// jac and checkpoint load share the sampler options and the output writer.

struct SamplerConfig {
  int iters = 30;
  int sampler = 2;
  int L = 50;
  bool parallel = false;
  int workers = 1;
  std::uint64_t seed = 1;
};

void add_sampler_options(CLI::App* app, SamplerConfig& s) {
  app->add_option("--iters", s.iters, "Sampler iterations")->check(CLI::NonNegativeNumber);
  app->add_option("--sampler", s.sampler, "1 (blocked) or 2 (importance sampling)")
      ->check(CLI::IsMember({1, 2}));
  app->add_option("-L,--samples,--L", s.L, "Importance samples per item")
      ->check(CLI::PositiveNumber);
  app->add_flag("--parallel", s.parallel, "Map/reduce schedule against a frozen snapshot");
  app->add_option("--workers", s.workers, "Worker threads for --parallel")
      ->check(CLI::PositiveNumber);
  app->add_option("--seed", s.seed, "Random seed");
}

JACRun run_sampler(JACState& state, const SamplerConfig& s) {
  JACOptions options;
  options.sampler = s.sampler;
  options.L = s.L;
  if (s.parallel) {
    if (s.sampler != 2) throw ConfigError("--parallel runs sampler 2 only");
    return run_parallel_jac(state, s.iters, s.workers, options);
  }
  return run_jac(state, s.iters, options);
}

void write_jac_outputs(StagedOutput& staged, const JACState& state, const JACRun& run,
                       const Dataset& data, const std::string& format, Report& r) {
  const Model& model = *state.model;
  const std::vector<Vector> after = warped_items(model, state.items, state.rho);

  r.add("items", state.items.size());
  r.add("family", model.family().name());
  r.add("iterations", state.iteration);
  r.add("clusters", state.cluster_count());
  r.add("gamma", state.gamma);
  r.add("joint_score", jac_joint_score(state));
  if (run.best_iteration >= 0) {
    r.add("best_score", run.best_score);
    r.add("best_iteration", run.best_iteration);
  }
  for (const auto& [id, cl] : state.clusters) {
    r.add("cluster_" + std::to_string(id) + "_members", cl.member_count);
  }
  if (!data.labels.empty() && data.labels.size() == state.z.size() && state.z.size() >= 2) {
    r.add("rand_index", rand_index(state.z, data.labels));
  }
  if (state.items.size() >= 2) {
    const std::vector<Vector> before = raw_values(data);
    const std::vector<int> one(state.items.size(), 0);
    r.add("alignment_unaligned", alignment_score(before, state.z).mean);
    r.add("alignment_aligned", alignment_score(after, state.z).mean);
    r.add("alignment_single_cluster", alignment_score(before, one).mean);
  }

  write_text(staged / "z.csv", int_lines(state.z));
  write_text(staged / "rho.csv", csv_rows(state.rho));
  if (!state.items.empty()) write_aligned(staged, data, format, after);
  if (data.kind == DataKind::images) {
    fs::create_directories(staged / "means");
    for (const auto& [id, cl] : state.clusters) {
      const Vector m = mean_of(after, state.z, id);
      if (m.empty()) continue;
      write_pgm(staged / ("means/cluster_" + std::to_string(id) + ".pgm"), m, data.width,
                data.height);
    }
  } else {
    std::string means;
    for (const auto& [id, cl] : state.clusters) {
      const Vector m = mean_of(after, state.z, id);
      if (m.empty()) continue;
      means += std::to_string(id);
      for (double v : m) means += "," + fmt(v);
      means += "\n";
    }
    write_text(staged / "cluster_means.csv", means);
  }
  std::string tr = "iteration,clusters,joint_score,gamma\n";
  for (const JACTraceEntry& e : run.trace) {
    tr += std::to_string(e.iteration) + "," + std::to_string(e.clusters) + "," +
          fmt(e.joint_score) + "," + fmt(e.gamma) + "\n";
  }
  write_text(staged / "trace.csv", tr);
  save_checkpoint_file(state, staged / "checkpoint.bin");
  write_text(staged / "report.tsv", r.text());
}

// Seed file: one "index label" pair per line (comma or whitespace separated).
std::vector<std::pair<std::size_t, int>> load_seed_file(const std::string& raw, std::size_t n) {
  const fs::path path = resolve_input(raw);
  std::ifstream f(path);
  if (!f) throw DataFailure("seed file not found: " + path.string());
  std::vector<std::pair<std::size_t, int>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    long long idx = 0;
    int label = 0;
    if (!(ss >> idx)) continue;
    if (!(ss >> label) || idx < 0 || static_cast<std::size_t>(idx) >= n) {
      throw DataFailure(path.string() + ":" + std::to_string(line_no) + ": bad seed entry");
    }
    out.emplace_back(static_cast<std::size_t>(idx), label);
  }
  if (out.empty()) throw DataFailure(path.string() + ": no seed entries");
  return out;
}

struct JacConfig {
  InputOptions input;
  ModelOptions model;
  SamplerConfig sampler;
  std::string output;
  double gamma_init = 1.0;
  std::string seeds;
  int replication = 1;
  std::string init = "single";
};

int run_jac_cmd(const JacConfig& c, std::ostream& out) {
  if (c.gamma_init == 0.0 && c.seeds.empty()) {
    throw ConfigError("--gamma-init 0 requires --seeds (the partition could never change)");
  }
  StagedOutput staged(c.output);
  std::string format;
  const Dataset data = load_input(c.input, &format);
  const auto seeds =
      c.seeds.empty() ? std::vector<std::pair<std::size_t, int>>{} : load_seed_file(c.seeds, data.size());
  const ModelPtr model = build_model(c.model, data);

  JACState state = make_jac_state(model, data.items, c.gamma_init, c.sampler.seed,
                                  c.init == "single" ? InitMode::single_cluster
                                                     : InitMode::unassigned);
  if (!seeds.empty()) {
    seed_clusters(state, seeds, c.replication);
    // Place the unlabelled items once before the recorded iterations.
    if (c.sampler.parallel) {
      JACOptions o;
      o.L = c.sampler.L;
      parallel_iteration(state, c.sampler.workers, o);
    } else {
      JACOptions o;
      o.sampler = c.sampler.sampler;
      o.L = c.sampler.L;
      gibbs_iteration(state, o);
    }
  }
  const JACRun run = run_sampler(state, c.sampler);

  Report r;
  r.add("command", "jac");
  r.add("seeded_items", seeds.size());
  write_jac_outputs(staged, state, run, data, format, r);
  staged.commit();
  out << r.text();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthConfig {
  std::string kind = "curves";
  std::string output;
  std::uint64_t seed = 1;
  int count = 50;
  double magnitude = 0.3;
  double noise = -1.0;
  std::string family = "curve14";
  std::string bases;
  std::vector<std::string> groups;
};

PointGroup parse_group(const std::string& spec) {
  std::vector<double> v;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ':')) {
    try {
      v.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("bad point group '" + spec + "'");
    }
  }
  if (v.size() != 5) {
    throw ConfigError("point group '" + spec + "' needs radius:angle:spread:jitter:count");
  }
  if (!(v[0] > 0.0) || v[2] < 0.0 || v[3] < 0.0 || v[4] < 1.0) {
    throw ConfigError("point group '" + spec + "' out of range");
  }
  return PointGroup{v[0], v[1], v[2], v[3], static_cast<int>(v[4])};
}

int run_synth_cmd(const SynthConfig& c, std::ostream& out) {
  StagedOutput staged(c.output);
  Dataset data;
  if (c.kind == "curves") {
    std::vector<Vector> bases;
    if (c.bases.empty() || c.bases == "builtin") {
      bases = builtin_base_curves();
    } else {
      InputOptions in;
      in.input = c.bases;
      in.format = "csv-curves";
      for (const DataItem& it : load_input(in).items) bases.push_back(it.values);
    }
    if (c.count < 1) throw ConfigError("--count must be at least 1");
    data = synth_curves(bases, c.count, c.seed, {c.family, c.magnitude, c.noise});
  } else {
    std::vector<PointGroup> groups;
    for (const std::string& g : c.groups) groups.push_back(parse_group(g));
    if (groups.empty()) {
      groups = {{1.0, 0.0, 0.4, 0.05, 50}, {3.0, 0.0, 0.4, 0.05, 50}};
    }
    data = synth_points2d(groups, c.seed);
  }
  const fs::path items = staged / "items.csv";
  save_dataset(data, items,
               data.kind == DataKind::curves ? DataFormat::csv_curves : DataFormat::csv_points);
  save_labels_text(data.labels, staged / "labels.txt");
  Report r;
  r.add("command", "synth");
  r.add("kind", to_string(data.kind));
  r.add("items", data.size());
  r.add("length", data.items.front().size());
  write_text(staged / "report.tsv", r.text());
  staged.commit();
  out << r.text();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalConfig {
  std::string pred;
  std::string truth;
  InputOptions aligned;
  std::string output;
};

std::vector<int> load_label_file(const std::string& raw) {
  const fs::path p = resolve_input(raw);
  if (!fs::exists(p)) throw DataFailure("labels not found: " + p.string());
  try {
    return load_labels(p);
  } catch (const std::exception& e) {
    throw DataFailure(e.what());
  }
}

int run_eval_cmd(const EvalConfig& c, std::ostream& out) {
  if (c.pred.empty() && c.aligned.input.empty()) {
    throw ConfigError("eval needs --pred and/or --aligned");
  }
  Report r;
  r.add("command", "eval");
  std::vector<int> pred;
  if (!c.pred.empty()) pred = load_label_file(c.pred);
  if (!c.truth.empty()) {
    if (pred.empty()) throw ConfigError("--truth needs --pred");
    const std::vector<int> truth = load_label_file(c.truth);
    if (truth.size() != pred.size()) {
      throw DataFailure("pred has " + std::to_string(pred.size()) + " labels, truth has " +
                        std::to_string(truth.size()));
    }
    r.add("items", pred.size());
    r.add("rand_index", rand_index(pred, truth));
  }
  if (!c.aligned.input.empty()) {
    const Dataset data = load_input(c.aligned);
    const std::vector<Vector> rows = raw_values(data);
    std::vector<int> z = pred.empty() ? std::vector<int>(rows.size(), 0) : pred;
    if (z.size() != rows.size()) {
      throw DataFailure("pred has " + std::to_string(z.size()) + " labels, aligned data has " +
                        std::to_string(rows.size()) + " items");
    }
    if (rows.size() >= 2) {
      const AlignmentScore s = alignment_score(rows, z);
      r.add("alignment_mean", s.mean);
      r.add("alignment_std", s.std);
      r.add("alignment_stderr", s.std_error);
      r.add("alignment_pairs", s.pairs);
    }
    add_shape_metrics(r, "aligned", data.kind, rows);
  }
  if (!c.output.empty()) write_text(c.output, r.text());
  out << r.text();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// checkpoint

struct CkSaveConfig {
  JacConfig jac;
};

struct CkLoadConfig {
  std::string checkpoint;
  InputOptions input;
  SamplerConfig sampler;
  std::string output;
};

struct CkCompareConfig {
  std::string a, b;
};

JACState read_checkpoint(const std::string& raw, std::vector<DataItem> items, std::uint64_t seed) {
  if (raw.empty()) throw ConfigError("--checkpoint is required");
  const fs::path p = resolve_input(raw);
  if (!fs::exists(p)) throw DataFailure("checkpoint not found: " + p.string());
  try {
    return load_checkpoint_file(p, std::move(items), seed);
  } catch (const FormatError& e) {
    throw DataFailure(e.what());
  }
}

int run_ck_save_cmd(const CkSaveConfig& c, std::ostream& out) {
  // A full jac run whose only product is the stats checkpoint.
  std::ostringstream sink;
  const fs::path target(c.jac.output);
  if (target.empty()) throw ConfigError("--output is required");
  fs::path parent = target.parent_path();
  if (parent.empty()) parent = ".";
  const fs::path work = parent / ("." + target.filename().string() + ".run");
  fs::remove_all(work);
  JacConfig j = c.jac;
  j.output = work.string();
  struct Cleanup {
    fs::path p;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  } cleanup{work};
  run_jac_cmd(j, sink);
  const fs::path tmp = parent / ("." + target.filename().string() + ".partial");
  fs::copy_file(work / "checkpoint.bin", tmp, fs::copy_options::overwrite_existing);
  fs::rename(tmp, target);
  Report r;
  r.add("command", "checkpoint-save");
  r.add("checkpoint", target.string());
  r.add("bytes", fs::file_size(target));
  out << sink.str() << r.text();
  return kExitOk;
}

int run_ck_load_cmd(const CkLoadConfig& c, std::ostream& out) {
  StagedOutput staged(c.output);
  Dataset data;
  std::string format;
  if (!c.input.input.empty()) data = load_input(c.input, &format);
  JACState state = read_checkpoint(c.checkpoint, data.items, c.sampler.seed);
  if (!data.items.empty()) {
    const Model& m = *state.model;
    if (data.kind != m.kind() || data.items.front().size() != m.data_dim()) {
      throw DataFailure("new items do not match the checkpoint's data shape");
    }
  }
  JACRun run;
  if (!state.items.empty()) run = run_sampler(state, c.sampler);
  Report r;
  r.add("command", "checkpoint-load");
  r.add("new_items", state.items.size());
  if (state.items.empty()) {
    r.add("clusters", state.cluster_count());
    r.add("gamma", state.gamma);
    save_checkpoint_file(state, staged / "checkpoint.bin");
    write_text(staged / "report.tsv", r.text());
  } else {
    write_jac_outputs(staged, state, run, data, format, r);
  }
  staged.commit();
  out << r.text();
  return kExitOk;
}

int run_ck_compare_cmd(const CkCompareConfig& c, std::ostream& out, std::ostream& err) {
  const JACState a = read_checkpoint(c.a, {}, 0);
  const JACState b = read_checkpoint(c.b, {}, 0);
  const bool same = same_clusters(a, b);
  Report r;
  r.add("command", "checkpoint-compare");
  r.add("clusters_a", a.cluster_count());
  r.add("clusters_b", b.cluster_count());
  r.add("identical", same ? 1 : 0);
  out << r.text();
  if (!same) {
    err << "checkpoints differ\n";
    return kExitRuntime;
  }
  return kExitOk;
}

void add_config_option(CLI::App* app, std::map<CLI::App*, std::string>& configs) {
  app->add_option("--config", configs[app], "key=value file mirroring the long options; flags win");
}

// Applies a key=value file to options the command line left unset.
void apply_config(CLI::App* app, const std::string& raw) {
  const fs::path path = resolve_input(raw);
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    s = s.substr(b, e - b + 1);
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
      s = s.substr(1, s.size() - 2);
    }
    return s;
  };
  while (std::getline(f, line)) {
    ++line_no;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    CLI::Option* opt = key == "config" ? nullptr : app->get_option_no_throw("--" + key);
    if (opt == nullptr) throw ConfigError(where + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Transformed Dirichlet-process mixtures: joint alignment and clustering", "tdpmix");
  app.require_subcommand(1);
  std::map<CLI::App*, std::string> configs;

  BaConfig ba;
  CLI::App* ba_cmd = app.add_subcommand("ba", "Bayesian joint alignment of one collection");
  add_input_options(ba_cmd, ba.input);
  add_model_options(ba_cmd, ba.model);
  ba_cmd->add_option("-o,--output,--out", ba.output, "Output directory");
  ba_cmd->add_option("--iters", ba.iters, "Maximum sweeps")->check(CLI::NonNegativeNumber);
  ba_cmd->add_option("--tol", ba.tol, "Relative joint-score tolerance")
      ->check(CLI::NonNegativeNumber);
  ba_cmd->add_option("--seed", ba.seed, "Random seed");
  add_config_option(ba_cmd, configs);

  JacConfig jac;
  auto add_jac = [&configs](CLI::App* cmd, JacConfig& j) {
    add_input_options(cmd, j.input);
    add_model_options(cmd, j.model);
    add_sampler_options(cmd, j.sampler);
    cmd->add_option("-o,--output,--out", j.output, "Output directory");
    cmd->add_option("--gamma-init", j.gamma_init, "Initial DP concentration")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--seeds", j.seeds, "Labelled items: 'index label' per line");
    cmd->add_option("--replication", j.replication, "Copies of each labelled item")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--init", j.init, "single (one cluster) or unassigned")
        ->check(CLI::IsMember({"single", "unassigned"}));
    add_config_option(cmd, configs);
  };
  CLI::App* jac_cmd = app.add_subcommand("jac", "Joint alignment and clustering");
  add_jac(jac_cmd, jac);

  SynthConfig synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--kind", synth.kind, "curves or points")
      ->check(CLI::IsMember({"curves", "points"}));
  synth_cmd->add_option("-o,--output,--out", synth.output, "Output directory");
  synth_cmd->add_option("--seed", synth.seed, "Random seed");
  synth_cmd->add_option("--count", synth.count, "Curves per base");
  synth_cmd->add_option("--magnitude", synth.magnitude, "Transformation magnitude (hint units)")
      ->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--noise", synth.noise,
                        "Observation noise std (negative: 1% of each base's range)");
  synth_cmd->add_option("--family", synth.family, "Curve transformation family")
      ->check(CLI::IsMember({"curve14", "curve13-noamp"}));
  synth_cmd->add_option("--bases", synth.bases, "builtin or a csv-curves file");
  synth_cmd->add_option("--group", synth.groups, "Point group radius:angle:spread:jitter:count");
  add_config_option(synth_cmd, configs);

  EvalConfig ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score a clustering and/or an aligned dataset");
  eval_cmd->add_option("--pred", ev.pred, "Predicted cluster labels");
  eval_cmd->add_option("--truth", ev.truth, "Ground-truth labels");
  eval_cmd->add_option("--aligned", ev.aligned.input, "Aligned dataset");
  eval_cmd->add_option("--format", ev.aligned.format, "Format of --aligned")
      ->check(CLI::IsMember({"csv-curves", "csv-points", "pgm-dir", "idx"}));
  eval_cmd->add_option("-o,--output", ev.output, "Also write the report to this file");
  add_config_option(eval_cmd, configs);

  CLI::App* ck_cmd = app.add_subcommand("checkpoint", "Stats-only checkpoints");
  ck_cmd->require_subcommand(1);
  CkSaveConfig ck_save;
  CLI::App* ck_save_cmd = ck_cmd->add_subcommand("save", "Run jac and keep only its checkpoint");
  add_jac(ck_save_cmd, ck_save.jac);
  ck_save_cmd->get_option("--output")->description("Checkpoint file to write");

  CkLoadConfig ck_load;
  CLI::App* ck_load_cmd =
      ck_cmd->add_subcommand("load", "Warm-start on new items (or re-save with none)");
  ck_load_cmd->add_option("-c,--checkpoint", ck_load.checkpoint, "Checkpoint file");
  add_input_options(ck_load_cmd, ck_load.input);
  add_sampler_options(ck_load_cmd, ck_load.sampler);
  ck_load.sampler.iters = 1;
  ck_load_cmd->add_option("-o,--output,--out", ck_load.output, "Output directory");
  add_config_option(ck_load_cmd, configs);

  CkCompareConfig ck_cmp;
  CLI::App* ck_cmp_cmd =
      ck_cmd->add_subcommand("compare", "Check two checkpoints hold bit-identical statistics");
  ck_cmp_cmd->add_option("a", ck_cmp.a, "First checkpoint")->required();
  ck_cmp_cmd->add_option("b", ck_cmp.b, "Second checkpoint")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    for (const auto& [cmd, file] : configs) {
      if (*cmd && !file.empty()) apply_config(cmd, file);
    }
    if (*ba_cmd) return run_ba_cmd(ba, out);
    if (*jac_cmd) return run_jac_cmd(jac, out);
    if (*synth_cmd) return run_synth_cmd(synth, out);
    if (*eval_cmd) return run_eval_cmd(ev, out);
    if (*ck_save_cmd) return run_ck_save_cmd(ck_save, out);
    if (*ck_load_cmd) return run_ck_load_cmd(ck_load, out);
    if (*ck_cmp_cmd) return run_ck_compare_cmd(ck_cmp, out, err);
  } catch (const ConfigError& e) {
    err << "tdpmix: configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataFailure& e) {
    err << "tdpmix: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "tdpmix: error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace tdpmix
