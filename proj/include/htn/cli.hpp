// cli.hpp: datasets, experiment configuration, and grid execution.

#pragma once

#include "htn/train.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace htn::cli {

class DataFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyDatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  std::vector<std::vector<double>> features;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return labels.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::size_t num_features() const { return features.empty() ? 0 : features.front().size(); }
};

/// CSV with a header line, four numeric columns and a class-name column.
/// Class indices follow the sorted class names.
Dataset parse_iris(std::istream& is);
Dataset load_iris(const std::filesystem::path& path);

inline constexpr std::size_t kMnistSide = 28;
inline constexpr std::size_t kPoolSide = 7;

/// 4x4 mean pooling of a 28x28 byte image, scaled to [0, 1] (49 values).
std::vector<double> pool_image(std::span<const std::uint8_t> pixels);

/// IDX image/label files, filtered to two classes (relabelled 0 and 1 in the
/// given order), pooled to 7x7. `limit` > 0 keeps the first `limit` matches.
Dataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels,
                   std::pair<int, int> classes, std::size_t limit = 0);

/// Gaussian class clusters clipped into [0, 1].
Dataset make_synthetic(std::size_t samples, std::size_t features, std::size_t classes,
                       std::uint64_t seed);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per-class shuffle, then the first round(fraction * class size) go to train.
Split stratified_split(std::span<const std::size_t> labels, double train_fraction,
                       std::uint64_t seed);

struct MinMaxScaler {
  std::vector<double> mins;
  std::vector<double> maxs;

  static MinMaxScaler fit(const Dataset& data, std::span<const std::size_t> rows);
  /// Maps each feature to [0, 1]; values outside the fitted range are clamped
  /// and constant features map to 0.
  std::vector<double> transform(std::span<const double> x) const;
};

std::vector<Sample> make_samples(const Dataset& data, std::span<const std::size_t> rows,
                                 const MinMaxScaler* scaler, std::size_t output_dim);

struct DatasetConfig {
  std::string kind = "iris";  // iris | mnist | synthetic
  std::filesystem::path path;
  std::filesystem::path images;
  std::filesystem::path labels;
  std::pair<int, int> classes{0, 1};
  std::size_t limit = 0;
  std::size_t samples = 60;
  std::size_t features = 4;
  std::size_t num_classes = 2;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetConfig dataset;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 42;
  std::size_t chi = 8;
  std::size_t xi = 2;
  std::vector<std::size_t> output_dims{2, 2};
  std::string init = "data";  // data | random
  std::uint64_t model_seed = 42;
  LossConfig loss;
  SweepConfig sweep;
  std::vector<std::size_t> grid_chi;
  std::vector<std::size_t> grid_xi;
  std::vector<double> grid_t;
  std::vector<double> grid_w;

  bool has_grid() const {
    return !grid_chi.empty() || !grid_xi.empty() || !grid_t.empty() || !grid_w.empty();
  }
  void set_seed(std::uint64_t seed);
  void validate() const;
};

/// Parses a JSON config. Relative dataset paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& json_text,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct Cell {
  std::size_t index = 0;
  std::size_t chi = 0;
  std::size_t xi = 0;
  LossConfig loss;
};

std::vector<Cell> expand_grid(const ExperimentConfig& cfg);

struct CellResult {
  Cell cell;
  std::optional<TrainedReport> report;
  std::string error;
  double seconds = 0.0;
};

/// Loads the dataset and runs one cell end to end.
CellResult run_cell(const ExperimentConfig& cfg, const Cell& cell);

struct RunSummary {
  std::vector<CellResult> cells;
  std::filesystem::path csv_path;
};

/// Runs all cells on up to `threads` workers and writes per-cell JSON
/// records, aggregate.csv and timing.json into `out_dir`.
RunSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                          std::size_t threads = 1);

/// Metrics record of one cell; contains no wall-clock data.
std::string cell_record_json(const ExperimentConfig& cfg, const CellResult& result);
std::string aggregate_csv(const std::vector<CellResult>& cells);
std::string cell_file_name(const Cell& cell);

/// Writes via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace htn::cli
