#pragma once

// Dataset loading and saving, synthetic generators and a small gradient
// histogram feature map.

#include <filesystem>
#include <string>
#include <vector>

#include "tdpmix/model.hpp"

namespace tdpmix {

struct Dataset {
  DataKind kind = DataKind::curves;
  int width = 0;
  int height = 1;
  std::vector<DataItem> items;
  std::vector<int> labels;  // empty when no ground truth is known

  std::size_t size() const { return items.size(); }
  // Throws FormatError unless items share one shape and labels match in length.
  void validate() const;
};

enum class DataFormat { csv_curves, csv_points, pgm_dir, idx };

DataFormat data_format_from_string(const std::string& name);
std::string to_string(DataFormat format);

// csv-curves: one curve per row, ragged rows resampled to the median length.
// csv-points: "x,y" per row. pgm-dir: every *.pgm (P5) file, sorted by name.
// idx: unsigned-byte image file (magic 0x00000803). Pixels are scaled to [0,1].
Dataset load_dataset(const std::filesystem::path& path, DataFormat format);
void save_dataset(const Dataset& data, const std::filesystem::path& path, DataFormat format);

// Labels: idx (magic 0x00000801) or text with one integer per line.
std::vector<int> load_idx_labels(const std::filesystem::path& path);
void save_idx_labels(const std::vector<int>& labels, const std::filesystem::path& path);
std::vector<int> load_labels_text(const std::filesystem::path& path);
void save_labels_text(const std::vector<int>& labels, const std::filesystem::path& path);
// Dispatches on the file's leading magic.
std::vector<int> load_labels(const std::filesystem::path& path);

// First per_class items of each listed class, in class-list order.
Dataset select_classes(const Dataset& data, const std::vector<int>& classes, int per_class);

// MNIST-style directory holding train-images-idx3-ubyte and train-labels-idx1-ubyte.
Dataset load_mnist(const std::filesystem::path& dir);

// Linear resampling of a uniformly sampled curve onto n samples.
Vector resample_curve(std::span<const double> values, std::size_t n);

// Gaussian bump, double bump, ramp-plateau and damped sinusoid.
std::vector<Vector> builtin_base_curves(std::size_t length = 128);

struct CurveSynthOptions {
  std::string family = "curve14";
  double magnitude = 0.3;
  // Observation noise std; negative selects 0.01 x the base's amplitude range.
  double noise = -1.0;
};

// count transformed copies of each base; labels are base indices.
Dataset synth_curves(const std::vector<Vector>& bases, int count, std::uint64_t seed,
                     const CurveSynthOptions& options = {});

struct PointGroup {
  double radius = 1.0;
  double angle = 0.0;         // mean angle, radians
  double angle_spread = 0.5;  // std of the angle
  double radial_jitter = 0.0;
  int count = 50;
};

Dataset synth_points2d(const std::vector<PointGroup>& groups, std::uint64_t seed);

// Histogram of oriented gradients: square cells of cell_size pixels, unsigned
// orientation bins, 2x2-cell blocks with stride one cell and L2 normalisation.
struct HogSettings {
  int cell_size = 7;
  int bins = 9;
};
std::size_t hog_dim(int width, int height, const HogSettings& settings = {});
Vector hog_features(const DataItem& image, const HogSettings& settings = {});
FeatureMap hog_feature_map(int width, int height, const HogSettings& settings = {});

// Resolves a feature-map name ("" or "hog") for the given data shape.
FeatureMap feature_map_by_name(const std::string& name, DataKind kind, int width, int height);

}  // namespace tdpmix
