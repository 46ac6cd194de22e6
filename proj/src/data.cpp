#include "tdpmix/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace tdpmix {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const fs::path& path) {
  if (offset + 4 > bytes.size()) throw FormatError(path.string() + ": truncated IDX header");
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v = (v << 8) | static_cast<unsigned char>(bytes[offset + k]);
  return v;
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int k = 3; k >= 0; --k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

Vector parse_row(const std::string& line, const fs::path& path, std::size_t line_no) {
  Vector row;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const std::string t = trim(cell);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v)) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + t +
                        "'");
    }
    row.push_back(v);
  }
  return row;
}

std::vector<Vector> read_csv_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<Vector> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    rows.push_back(parse_row(t, path, line_no));
  }
  if (rows.empty()) throw FormatError(path.string() + ": no data rows");
  return rows;
}

std::string format_row(std::span<const double> row) {
  std::string out;
  char buf[32];
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (k > 0) out.push_back(',');
    std::snprintf(buf, sizeof buf, "%.17g", row[k]);
    out += buf;
  }
  out.push_back('\n');
  return out;
}

// PGM header tokens, skipping comments.
std::string pgm_token(const std::string& bytes, std::size_t& pos, const fs::path& path) {
  while (pos < bytes.size()) {
    const char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) throw FormatError(path.string() + ": truncated PGM header");
  return bytes.substr(start, pos - start);
}

int pgm_int(const std::string& token, const fs::path& path) {
  char* end = nullptr;
  const long v = std::strtol(token.c_str(), &end, 10);
  if (end != token.c_str() + token.size() || v <= 0 || v > 65535) {
    throw FormatError(path.string() + ": bad PGM header field '" + token + "'");
  }
  return static_cast<int>(v);
}

DataItem load_pgm(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.empty()) throw FormatError(path.string() + ": empty file");
  std::size_t pos = 0;
  if (pgm_token(bytes, pos, path) != "P5") throw FormatError(path.string() + ": not a P5 PGM");
  const int w = pgm_int(pgm_token(bytes, pos, path), path);
  const int h = pgm_int(pgm_token(bytes, pos, path), path);
  const int maxval = pgm_int(pgm_token(bytes, pos, path), path);
  ++pos;  // single whitespace before the raster
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (pos + n * bpp > bytes.size()) throw FormatError(path.string() + ": truncated raster");
  Vector values(n);
  for (std::size_t k = 0; k < n; ++k) {
    unsigned v = static_cast<unsigned char>(bytes[pos + k * bpp]);
    if (bpp == 2) v = (v << 8) | static_cast<unsigned char>(bytes[pos + k * bpp + 1]);
    values[k] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return make_image(w, h, std::move(values));
}

Dataset load_idx_images(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.empty()) throw FormatError(path.string() + ": empty file");
  const std::uint32_t magic = read_be32(bytes, 0, path);
  if (magic != kIdxImages) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", magic);
    throw FormatError(path.string() + ": IDX magic " + buf + ", expected 0x00000803");
  }
  const std::uint32_t n = read_be32(bytes, 4, path);
  const std::uint32_t rows = read_be32(bytes, 8, path);
  const std::uint32_t cols = read_be32(bytes, 12, path);
  if (rows == 0 || cols == 0 || rows > 65535 || cols > 65535) {
    throw FormatError(path.string() + ": bad IDX image size");
  }
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  if (16 + static_cast<std::size_t>(n) * pixels != bytes.size()) {
    throw FormatError(path.string() + ": IDX length does not match its header");
  }
  Dataset data;
  data.kind = DataKind::images;
  data.width = static_cast<int>(cols);
  data.height = static_cast<int>(rows);
  data.items.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Vector v(pixels);
    for (std::size_t k = 0; k < pixels; ++k) {
      v[k] = static_cast<unsigned char>(bytes[16 + i * pixels + k]) / 255.0;
    }
    data.items.push_back(make_image(data.width, data.height, std::move(v)));
  }
  return data;
}

}  // namespace

void Dataset::validate() const {
  for (const DataItem& item : items) {
    if (item.kind != kind || item.width != width || item.height != height) {
      throw FormatError("dataset items do not share one shape");
    }
  }
  if (!labels.empty() && labels.size() != items.size()) {
    throw FormatError("dataset has " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(items.size()) + " items");
  }
}

DataFormat data_format_from_string(const std::string& name) {
  if (name == "csv-curves") return DataFormat::csv_curves;
  if (name == "csv-points") return DataFormat::csv_points;
  if (name == "pgm-dir") return DataFormat::pgm_dir;
  if (name == "idx") return DataFormat::idx;
  throw ConfigError("unknown data format '" + name + "'");
}

std::string to_string(DataFormat format) {
  switch (format) {
    case DataFormat::csv_curves:
      return "csv-curves";
    case DataFormat::csv_points:
      return "csv-points";
    case DataFormat::pgm_dir:
      return "pgm-dir";
    case DataFormat::idx:
      return "idx";
  }
  return "?";
}

Vector resample_curve(std::span<const double> values, std::size_t n) {
  if (values.empty() || n == 0) throw DimensionError("cannot resample an empty curve");
  if (values.size() == n) return Vector(values.begin(), values.end());
  Vector out(n);
  const double scale = n > 1 ? static_cast<double>(values.size() - 1) / static_cast<double>(n - 1)
                             : 0.0;
  for (std::size_t j = 0; j < n; ++j) out[j] = sample_linear(values, scale * static_cast<double>(j));
  return out;
}

Dataset load_dataset(const fs::path& path, DataFormat format) {
  if (!fs::exists(path)) throw FormatError("input not found: " + path.string());
  Dataset data;
  switch (format) {
    case DataFormat::csv_curves: {
      std::vector<Vector> rows = read_csv_rows(path);
      std::vector<std::size_t> lengths;
      for (const Vector& r : rows) lengths.push_back(r.size());
      std::sort(lengths.begin(), lengths.end());
      const std::size_t len = lengths[(lengths.size() - 1) / 2];
      if (len < 2) throw FormatError(path.string() + ": curves need at least 2 samples");
      data.kind = DataKind::curves;
      data.width = static_cast<int>(len);
      for (const Vector& r : rows) data.items.push_back(make_curve(resample_curve(r, len)));
      break;
    }
    case DataFormat::csv_points: {
      data.kind = DataKind::points2d;
      data.width = 2;
      std::size_t line = 0;
      for (const Vector& r : read_csv_rows(path)) {
        ++line;
        if (r.size() != 2) {
          throw FormatError(path.string() + ": point row " + std::to_string(line) + " has " +
                            std::to_string(r.size()) + " columns");
        }
        data.items.push_back(make_point(r[0], r[1]));
      }
      break;
    }
    case DataFormat::pgm_dir: {
      if (!fs::is_directory(path)) throw FormatError(path.string() + " is not a directory");
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
          files.push_back(entry.path());
        }
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw FormatError(path.string() + ": no .pgm files");
      data.kind = DataKind::images;
      for (const fs::path& f : files) data.items.push_back(load_pgm(f));
      data.width = data.items.front().width;
      data.height = data.items.front().height;
      break;
    }
    case DataFormat::idx:
      data = load_idx_images(path);
      break;
  }
  data.validate();
  return data;
}

void save_dataset(const Dataset& data, const fs::path& path, DataFormat format) {
  data.validate();
  switch (format) {
    case DataFormat::csv_curves:
    case DataFormat::csv_points: {
      const DataKind want =
          format == DataFormat::csv_curves ? DataKind::curves : DataKind::points2d;
      if (data.kind != want) throw ConfigError("cannot write " + to_string(data.kind) + " as " +
                                               to_string(format));
      std::string out;
      for (const DataItem& item : data.items) out += format_row(item.values);
      write_file(path, out);
      break;
    }
    case DataFormat::pgm_dir: {
      if (data.kind != DataKind::images) throw ConfigError("pgm-dir holds images only");
      fs::create_directories(path);
      char name[32];
      for (std::size_t i = 0; i < data.items.size(); ++i) {
        const DataItem& item = data.items[i];
        std::string out = "P5\n" + std::to_string(item.width) + " " +
                          std::to_string(item.height) + "\n255\n";
        for (double v : item.values) out.push_back(static_cast<char>(to_byte(v)));
        std::snprintf(name, sizeof name, "item_%05zu.pgm", i);
        write_file(path / name, out);
      }
      break;
    }
    case DataFormat::idx: {
      if (data.kind != DataKind::images) throw ConfigError("idx holds images only");
      std::string out;
      put_be32(out, kIdxImages);
      put_be32(out, static_cast<std::uint32_t>(data.items.size()));
      put_be32(out, static_cast<std::uint32_t>(data.height));
      put_be32(out, static_cast<std::uint32_t>(data.width));
      for (const DataItem& item : data.items) {
        for (double v : item.values) out.push_back(static_cast<char>(to_byte(v)));
      }
      write_file(path, out);
      break;
    }
  }
}

std::vector<int> load_idx_labels(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.empty()) throw FormatError(path.string() + ": empty file");
  if (read_be32(bytes, 0, path) != kIdxLabels) {
    throw FormatError(path.string() + ": IDX magic is not 0x00000801");
  }
  const std::uint32_t n = read_be32(bytes, 4, path);
  if (8 + static_cast<std::size_t>(n) != bytes.size()) {
    throw FormatError(path.string() + ": IDX length does not match its header");
  }
  std::vector<int> labels(n);
  for (std::uint32_t i = 0; i < n; ++i) labels[i] = static_cast<unsigned char>(bytes[8 + i]);
  return labels;
}

void save_idx_labels(const std::vector<int>& labels, const fs::path& path) {
  std::string out;
  put_be32(out, kIdxLabels);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    if (l < 0 || l > 255) throw DomainError("IDX labels must fit in one byte");
    out.push_back(static_cast<char>(l));
  }
  write_file(path, out);
}

std::vector<int> load_labels_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad label '" + t + "'");
    }
    labels.push_back(static_cast<int>(v));
  }
  if (labels.empty()) throw FormatError(path.string() + ": no labels");
  return labels;
}

void save_labels_text(const std::vector<int>& labels, const fs::path& path) {
  std::string out;
  for (int l : labels) out += std::to_string(l) + "\n";
  write_file(path, out);
}

std::vector<int> load_labels(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char head[4] = {};
  in.read(head, 4);
  if (in.gcount() == 4 && head[0] == 0 && head[1] == 0 && head[2] == 8 && head[3] == 1) {
    return load_idx_labels(path);
  }
  return load_labels_text(path);
}

Dataset select_classes(const Dataset& data, const std::vector<int>& classes, int per_class) {
  if (data.labels.size() != data.items.size()) throw DomainError("dataset has no labels");
  if (per_class < 1) throw DomainError("per_class must be >= 1");
  Dataset out;
  out.kind = data.kind;
  out.width = data.width;
  out.height = data.height;
  for (int c : classes) {
    int taken = 0;
    for (std::size_t i = 0; i < data.items.size() && taken < per_class; ++i) {
      if (data.labels[i] != c) continue;
      out.items.push_back(data.items[i]);
      out.labels.push_back(c);
      ++taken;
    }
    if (taken < per_class) {
      throw DomainError("class " + std::to_string(c) + " has only " + std::to_string(taken) +
                        " items");
    }
  }
  return out;
}

Dataset load_mnist(const fs::path& dir) {
  Dataset data = load_dataset(dir / "train-images-idx3-ubyte", DataFormat::idx);
  data.labels = load_idx_labels(dir / "train-labels-idx1-ubyte");
  data.validate();
  return data;
}

std::vector<Vector> builtin_base_curves(std::size_t length) {
  if (length < 2) throw DimensionError("base curves need at least 2 samples");
  auto bump = [](double u, double c, double w) {
    const double r = (u - c) / w;
    return std::exp(-0.5 * r * r);
  };
  auto smoothstep = [](double a, double b, double u) {
    const double t = std::clamp((u - a) / (b - a), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
  };
  std::vector<Vector> bases(4, Vector(length));
  for (std::size_t j = 0; j < length; ++j) {
    const double u = static_cast<double>(j) / static_cast<double>(length - 1);
    bases[0][j] = bump(u, 0.5, 0.08);
    bases[1][j] = bump(u, 0.3, 0.06) + 0.7 * bump(u, 0.7, 0.06);
    bases[2][j] = smoothstep(0.15, 0.45, u) * (1.0 - smoothstep(0.75, 0.9, u));
    bases[3][j] = std::exp(-3.0 * u) * std::sin(6.0 * std::numbers::pi * u);
  }
  return bases;
}

Dataset synth_curves(const std::vector<Vector>& bases, int count, std::uint64_t seed,
                     const CurveSynthOptions& options) {
  if (count < 1) throw DomainError("synth_curves: count must be >= 1");
  if (bases.empty()) throw DomainError("synth_curves: no base curves");
  Rng rng(seed);
  Dataset data;
  data.kind = DataKind::curves;
  data.width = static_cast<int>(bases.front().size());
  for (std::size_t b = 0; b < bases.size(); ++b) {
    if (bases[b].size() != bases.front().size()) {
      throw DimensionError("synth_curves: base curves differ in length");
    }
    const auto [lo, hi] = std::minmax_element(bases[b].begin(), bases[b].end());
    const double range = *hi - *lo;
    const double amplitude = range > 0.0 ? range : 1.0;
    const FamilyPtr family = make_family(options.family, {0, 0, amplitude});
    const double noise = options.noise >= 0.0 ? options.noise : 0.01 * range;
    const DataItem base = make_curve(bases[b]);
    for (int c = 0; c < count; ++c) {
      DataItem item = family->apply(base, family->random_params(options.magnitude, rng));
      if (noise > 0.0) {
        for (double& v : item.values) v += sample_normal(0.0, noise, rng);
      }
      data.items.push_back(std::move(item));
      data.labels.push_back(static_cast<int>(b));
    }
  }
  return data;
}

Dataset synth_points2d(const std::vector<PointGroup>& groups, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.kind = DataKind::points2d;
  data.width = 2;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const PointGroup& grp = groups[g];
    if (!(grp.radius > 0.0)) throw DomainError("synth_points2d: radius must be > 0");
    for (int c = 0; c < grp.count; ++c) {
      const double angle = grp.angle + (grp.angle_spread > 0.0
                                            ? sample_normal(0.0, grp.angle_spread, rng)
                                            : 0.0);
      const double r = grp.radius + (grp.radial_jitter > 0.0
                                         ? sample_normal(0.0, grp.radial_jitter, rng)
                                         : 0.0);
      data.items.push_back(make_point(r * std::cos(angle), r * std::sin(angle)));
      data.labels.push_back(static_cast<int>(g));
    }
  }
  return data;
}

std::size_t hog_dim(int width, int height, const HogSettings& s) {
  const int cx = width / s.cell_size;
  const int cy = height / s.cell_size;
  if (cx < 2 || cy < 2) throw DimensionError("image too small for 2x2-cell HOG blocks");
  return static_cast<std::size_t>((cx - 1) * (cy - 1) * 4 * s.bins);
}

Vector hog_features(const DataItem& image, const HogSettings& s) {
  if (image.kind != DataKind::images) throw DimensionError("HOG needs an image");
  const int w = image.width;
  const int h = image.height;
  const int cx = w / s.cell_size;
  const int cy = h / s.cell_size;
  hog_dim(w, h, s);
  auto px = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return image.values[static_cast<std::size_t>(y) * w + x];
  };
  Vector cells(static_cast<std::size_t>(cx * cy * s.bins), 0.0);
  for (int y = 0; y < cy * s.cell_size; ++y) {
    for (int x = 0; x < cx * s.cell_size; ++x) {
      const double gx = px(x + 1, y) - px(x - 1, y);
      const double gy = px(x, y + 1) - px(x, y - 1);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double angle = std::atan2(gy, gx);
      if (angle < 0.0) angle += std::numbers::pi;
      // Linear interpolation between the two nearest bin centres.
      const double pos = angle / std::numbers::pi * s.bins - 0.5;
      const int b0 = static_cast<int>(std::floor(pos));
      const double frac = pos - b0;
      const int lo = (b0 % s.bins + s.bins) % s.bins;
      const int hi = (lo + 1) % s.bins;
      const std::size_t cell =
          static_cast<std::size_t>((y / s.cell_size) * cx + x / s.cell_size) * s.bins;
      cells[cell + lo] += mag * (1.0 - frac);
      cells[cell + hi] += mag * frac;
    }
  }
  Vector out;
  out.reserve(hog_dim(w, h, s));
  for (int by = 0; by + 1 < cy; ++by) {
    for (int bx = 0; bx + 1 < cx; ++bx) {
      const std::size_t start = out.size();
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const std::size_t cell = static_cast<std::size_t>((by + dy) * cx + bx + dx) * s.bins;
          out.insert(out.end(), cells.begin() + cell, cells.begin() + cell + s.bins);
        }
      }
      double norm = 1e-6;
      for (std::size_t k = start; k < out.size(); ++k) norm += out[k] * out[k];
      norm = std::sqrt(norm);
      for (std::size_t k = start; k < out.size(); ++k) out[k] /= norm;
    }
  }
  return out;
}

FeatureMap hog_feature_map(int width, int height, const HogSettings& settings) {
  return FeatureMap{"hog", hog_dim(width, height, settings),
                    [settings](const DataItem& item) { return hog_features(item, settings); }};
}

FeatureMap feature_map_by_name(const std::string& name, DataKind kind, int width, int height) {
  if (name.empty() || name == "none") return {};
  if (name == "hog") {
    if (kind != DataKind::images) throw ConfigError("hog features need image data");
    return hog_feature_map(width, height);
  }
  throw ConfigError("unknown feature map '" + name + "'");
}

}  // namespace tdpmix
