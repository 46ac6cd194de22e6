#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "tdpmix/data.hpp"
#include "tdpmix/metrics.hpp"

using namespace tdpmix;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("tdpmix_data_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int k = 3; k >= 0; --k) s.push_back(static_cast<char>(v >> (8 * k) & 0xff));
}

}  // namespace

TEST_CASE("pgm example") {
  TempDir tmp;
  fs::create_directories(tmp.path / "imgs");
  write_bytes(tmp.path / "imgs" / "a.pgm", std::string("P5\n2 2\n255\n") + '\0' + '\xff' +
                                               '\xff' + '\0');
  const Dataset d = load_dataset(tmp.path / "imgs", DataFormat::pgm_dir);
  REQUIRE(d.size() == 1);
  CHECK(d.kind == DataKind::images);
  CHECK(d.width == 2);
  CHECK(d.height == 2);
  CHECK(d.items[0].values == Vector{0, 1, 1, 0});
}

TEST_CASE("idx fixture") {
  TempDir tmp;
  std::string bytes;
  put_u32(bytes, 0x00000803);
  put_u32(bytes, 10);
  put_u32(bytes, 28);
  put_u32(bytes, 28);
  for (int i = 0; i < 10 * 784; ++i) bytes.push_back(static_cast<char>((i * 7) % 256));
  CHECK(bytes.size() == 16u + 7840u);
  write_bytes(tmp.path / "x.idx", bytes);
  const Dataset d = load_dataset(tmp.path / "x.idx", DataFormat::idx);
  REQUIRE(d.size() == 10);
  for (const auto& it : d.items) CHECK(it.size() == 784u);
  CHECK(d.items[3].values[5] == ((3 * 784 + 5) * 7 % 256) / 255.0);

  std::string labels;
  put_u32(labels, 0x00000801);
  put_u32(labels, 3);
  labels += std::string{'\x04', '\x09', '\x04'};
  write_bytes(tmp.path / "y.idx", labels);
  CHECK(load_labels(tmp.path / "y.idx") == std::vector<int>{4, 9, 4});

  std::string bad = bytes;
  bad[3] = '\x02';
  write_bytes(tmp.path / "bad.idx", bad);
  CHECK_THROWS_AS(load_dataset(tmp.path / "bad.idx", DataFormat::idx), FormatError);
  write_bytes(tmp.path / "short.idx", bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(load_dataset(tmp.path / "short.idx", DataFormat::idx), FormatError);
}

TEST_CASE("empty and malformed inputs are format errors") {
  TempDir tmp;
  write_bytes(tmp.path / "empty", "");
  CHECK_THROWS_AS(load_dataset(tmp.path / "empty", DataFormat::idx), FormatError);
  CHECK_THROWS_AS(load_dataset(tmp.path / "empty", DataFormat::csv_curves), FormatError);
  CHECK_THROWS_AS(load_dataset(tmp.path / "empty", DataFormat::csv_points), FormatError);
  CHECK_THROWS_AS(load_labels(tmp.path / "empty"), FormatError);
  CHECK_THROWS_AS(load_dataset(tmp.path / "missing", DataFormat::csv_curves), FormatError);
  write_bytes(tmp.path / "bad.csv", "1,2,x\n");
  CHECK_THROWS_AS(load_dataset(tmp.path / "bad.csv", DataFormat::csv_curves), FormatError);
  write_bytes(tmp.path / "pts.csv", "1,2\n3\n");
  CHECK_THROWS_AS(load_dataset(tmp.path / "pts.csv", DataFormat::csv_points), FormatError);
  fs::create_directories(tmp.path / "pgm");
  write_bytes(tmp.path / "pgm" / "a.pgm", "P2\n2 2\n255\n");
  CHECK_THROWS_AS(load_dataset(tmp.path / "pgm", DataFormat::pgm_dir), FormatError);
  CHECK_THROWS_AS(data_format_from_string("bmp"), ConfigError);
}

TEST_CASE("ragged curves are resampled to the median length") {
  TempDir tmp;
  write_bytes(tmp.path / "c.csv", "0,1,2\n0,1,2,3,4\n0,2,4,6,8\n0,0.5,1,1.5,2,2.5,3\n");
  const Dataset d = load_dataset(tmp.path / "c.csv", DataFormat::csv_curves);
  REQUIRE(d.size() == 4);
  for (const auto& it : d.items) CHECK(it.size() == 5u);
  const Vector expect_first{0, 0.5, 1, 1.5, 2};
  for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(d.items[0].values[j] - expect_first[j]) < 1e-12);
  CHECK(resample_curve(Vector{1, 3}, 3) == Vector{1, 2, 3});
}

TEST_CASE("save then load round trips") {
  TempDir tmp;
  Rng rng(1);
  Dataset curves;
  curves.kind = DataKind::curves;
  curves.width = 9;
  for (int i = 0; i < 5; ++i) {
    Vector v(9);
    for (double& x : v) x = sample_normal(0, 3, rng);
    curves.items.push_back(make_curve(v));
  }
  save_dataset(curves, tmp.path / "c.csv", DataFormat::csv_curves);
  const Dataset c2 = load_dataset(tmp.path / "c.csv", DataFormat::csv_curves);
  REQUIRE(c2.size() == curves.size());
  for (std::size_t i = 0; i < curves.size(); ++i) {
    for (std::size_t j = 0; j < 9; ++j) {
      CHECK(std::abs(c2.items[i].values[j] - curves.items[i].values[j]) <= 1e-12);
    }
  }

  const Dataset pts = synth_points2d({{2.0, 0.3, 1.0, 0.1, 7}}, 2);
  save_dataset(pts, tmp.path / "p.csv", DataFormat::csv_points);
  const Dataset p2 = load_dataset(tmp.path / "p.csv", DataFormat::csv_points);
  REQUIRE(p2.size() == pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (int j = 0; j < 2; ++j) {
      CHECK(std::abs(p2.items[i].values[j] - pts.items[i].values[j]) <= 1e-12);
    }
  }

  Dataset imgs;
  imgs.kind = DataKind::images;
  imgs.width = 5;
  imgs.height = 3;
  for (int i = 0; i < 4; ++i) {
    Vector v(15);
    for (double& x : v) x = static_cast<double>(rng() % 256) / 255.0;
    imgs.items.push_back(make_image(5, 3, v));
  }
  for (DataFormat f : {DataFormat::idx, DataFormat::pgm_dir}) {
    const fs::path p = tmp.path / ("imgs_" + to_string(f));
    save_dataset(imgs, p, f);
    const Dataset back = load_dataset(p, f);
    REQUIRE(back.size() == imgs.size());
    CHECK(back.width == 5);
    CHECK(back.height == 3);
    for (std::size_t i = 0; i < imgs.size(); ++i) CHECK(back.items[i] == imgs.items[i]);
    const fs::path again = tmp.path / ("again_" + to_string(f));
    save_dataset(back, again, f);
    if (f == DataFormat::idx) CHECK(read_bytes(again) == read_bytes(p));
  }

  const std::vector<int> labels{3, 1, 4, 1, 5};
  save_idx_labels(labels, tmp.path / "l.idx");
  save_labels_text(labels, tmp.path / "l.txt");
  CHECK(load_labels(tmp.path / "l.idx") == labels);
  CHECK(load_labels(tmp.path / "l.txt") == labels);
}

TEST_CASE("select_classes keeps class order and counts") {
  Dataset d;
  d.kind = DataKind::curves;
  d.width = 2;
  const std::vector<int> labels{9, 4, 4, 1, 9, 4, 9};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    d.items.push_back(make_curve({static_cast<double>(i), 0.0}));
  }
  d.labels = labels;
  const Dataset s = select_classes(d, {4, 9}, 2);
  CHECK(s.labels == std::vector<int>{4, 4, 9, 9});
  CHECK(s.items[0].values[0] == 1.0);
  CHECK(s.items[2].values[0] == 0.0);
}

TEST_CASE("synthetic curves") {
  const auto bases = builtin_base_curves();
  REQUIRE(bases.size() == 4u);
  for (const auto& b : bases) CHECK(b.size() == 128u);

  CurveSynthOptions exact;
  exact.magnitude = 0.0;
  exact.noise = 0.0;
  const Dataset copies = synth_curves(bases, 3, 1, exact);
  REQUIRE(copies.size() == 12);
  for (std::size_t i = 0; i < copies.size(); ++i) {
    CHECK(copies.labels[i] == static_cast<int>(i / 3));
    CHECK(copies.items[i].values == bases[i / 3]);
  }

  const Dataset a = synth_curves(bases, 5, 7), b = synth_curves(bases, 5, 7);
  CHECK(a.items == b.items);
  CHECK(a.labels == b.labels);
  CHECK_FALSE(synth_curves(bases, 5, 8).items == a.items);

  for (std::size_t k = 0; k < bases.size(); ++k) {
    CurveSynthOptions noise_only;
    noise_only.magnitude = 0.0;
    const Dataset quiet = synth_curves({bases[k]}, 50, 10 + k, noise_only);
    const Dataset moved = synth_curves({bases[k]}, 50, 10 + k);
    std::vector<Vector> q, m;
    for (const auto& it : quiet.items) q.push_back(it.values);
    for (const auto& it : moved.items) m.push_back(it.values);
    MESSAGE("base " << k << " stddev ratio " << stddev_score(m) / stddev_score(q));
    CHECK(stddev_score(m) > 10.0 * stddev_score(q));
  }
}

TEST_CASE("synthetic points") {
  const Dataset fixed = synth_points2d({{2.0, 0.5, 0.0, 0.0, 5}, {1.0, 0.0, 0.0, 0.0, 3}}, 1);
  REQUIRE(fixed.size() == 8);
  for (int i = 1; i < 5; ++i) CHECK(fixed.items[i] == fixed.items[0]);
  CHECK(fixed.labels == std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1});

  const Dataset radial = synth_points2d({{1.0, 0.0, 0.7, 0.0, 50}, {3.0, 1.0, 0.7, 0.0, 50}}, 2);
  Rotation2D rot;
  Rng rng(3);
  for (std::size_t i = 0; i < radial.size(); ++i) {
    const DataItem q = rot.apply(radial.items[i], Vector{sample_normal(0, 3, rng)});
    const double r = std::hypot(q.values[0], q.values[1]);
    CHECK(std::abs(r - (radial.labels[i] == 0 ? 1.0 : 3.0)) < 1e-12);
  }

  const double spread = 0.4;
  const Dataset many = synth_points2d({{1.0, 0.2, spread, 0.0, 10000}}, 4);
  double s = 0.0, ss = 0.0;
  for (const auto& p : many.items) {
    const double a = std::atan2(p.values[1], p.values[0]);
    s += a;
    ss += a * a;
  }
  const double n = static_cast<double>(many.size());
  const double sd = std::sqrt(ss / n - (s / n) * (s / n));
  CHECK(sd > 0.9 * spread);
  CHECK(sd < 1.1 * spread);
  CHECK(synth_points2d({{1.0, 0.2, spread, 0.1, 20}}, 5).items ==
        synth_points2d({{1.0, 0.2, spread, 0.1, 20}}, 5).items);
  CHECK_THROWS_AS(synth_points2d({{0.0, 0.0, 0.1, 0.0, 2}}, 1), DomainError);
}

TEST_CASE("gradient histogram features") {
  CHECK(hog_dim(28, 28) == 3u * 3u * 4u * 9u);
  Vector v(28 * 28, 0.0);
  for (int y = 0; y < 28; ++y) {
    for (int x = 14; x < 28; ++x) v[y * 28 + x] = 1.0;
  }
  const Vector f = hog_features(make_image(28, 28, v));
  REQUIRE(f.size() == hog_dim(28, 28));
  for (std::size_t b = 0; b < f.size(); b += 36) {
    double norm = 0.0;
    for (std::size_t j = b; j < b + 36; ++j) {
      CHECK(f[j] >= 0.0);
      norm += f[j] * f[j];
    }
    CHECK(std::sqrt(norm) <= 1.0 + 1e-12);
  }
  const Vector blank = hog_features(make_image(28, 28, Vector(28 * 28, 0.0)));
  for (double x : blank) CHECK(x == 0.0);
  CHECK_THROWS_AS(hog_dim(10, 10), DimensionError);
  CHECK(feature_map_by_name("hog", DataKind::images, 28, 28).dim == hog_dim(28, 28));
  CHECK_FALSE(static_cast<bool>(feature_map_by_name("", DataKind::images, 28, 28)));
}
