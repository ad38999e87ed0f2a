#include "htn/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <random>
#include <sstream>

namespace htn::cli {

namespace {

// Splits one RFC-4180 record (no embedded newlines).
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else if (ch != '\r') {
      fields.back() += ch;
    }
  }
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
  }
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == s.size() && std::isfinite(out);
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t pos, const std::string& what) {
  if (pos + 4 > b.size()) throw DataFormatError(what + ": truncated header");
  return (std::uint32_t{b[pos]} << 24) | (std::uint32_t{b[pos + 1]} << 16) |
         (std::uint32_t{b[pos + 2]} << 8) | std::uint32_t{b[pos + 3]};
}

// Deterministic Fisher-Yates independent of the standard library's
// distribution implementations.
void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

Dataset parse_iris(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw EmptyDatasetError("iris: empty file");
  ++line_no;
  std::vector<std::vector<double>> features;
  std::vector<std::string> names;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 5)
      throw DataFormatError("iris line " + std::to_string(line_no) + ": expected 5 fields, got " +
                            std::to_string(fields.size()));
    std::vector<double> row(4);
    for (std::size_t j = 0; j < 4; ++j)
      if (!parse_double(fields[j], row[j]))
        throw DataFormatError("iris line " + std::to_string(line_no) + ": field " +
                              std::to_string(j + 1) + " ('" + fields[j] + "') is not a number");
    if (fields[4].empty())
      throw DataFormatError("iris line " + std::to_string(line_no) + ": missing class label");
    features.push_back(std::move(row));
    names.push_back(fields[4]);
  }
  if (features.empty()) throw EmptyDatasetError("iris: no data rows");
  Dataset d;
  d.class_names = names;
  std::sort(d.class_names.begin(), d.class_names.end());
  d.class_names.erase(std::unique(d.class_names.begin(), d.class_names.end()), d.class_names.end());
  for (const auto& n : names)
    d.labels.push_back(static_cast<std::size_t>(
        std::lower_bound(d.class_names.begin(), d.class_names.end(), n) - d.class_names.begin()));
  d.features = std::move(features);
  return d;
}

Dataset load_iris(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open " + path.string());
  return parse_iris(in);
}

std::vector<double> pool_image(std::span<const std::uint8_t> pixels) {
  if (pixels.size() != kMnistSide * kMnistSide) throw DataFormatError("pool_image: expected 28x28 pixels");
  constexpr std::size_t block = kMnistSide / kPoolSide;
  std::vector<double> out(kPoolSide * kPoolSide, 0.0);
  for (std::size_t r = 0; r < kMnistSide; ++r)
    for (std::size_t c = 0; c < kMnistSide; ++c)
      out[(r / block) * kPoolSide + c / block] += pixels[r * kMnistSide + c];
  for (auto& x : out) x /= 255.0 * block * block;
  return out;
}

Dataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels,
                   std::pair<int, int> classes, std::size_t limit) {
  const auto img = read_bytes(images);
  const auto lab = read_bytes(labels);
  if (be32(img, 0, "mnist images") != 0x00000803U)
    throw DataFormatError("mnist images: bad magic number in " + images.string());
  if (be32(lab, 0, "mnist labels") != 0x00000801U)
    throw DataFormatError("mnist labels: bad magic number in " + labels.string());
  const std::size_t n = be32(img, 4, "mnist images");
  const std::size_t rows = be32(img, 8, "mnist images");
  const std::size_t cols = be32(img, 12, "mnist images");
  if (rows != kMnistSide || cols != kMnistSide) throw DataFormatError("mnist images: expected 28x28");
  if (be32(lab, 4, "mnist labels") != n) throw DataFormatError("mnist: image and label counts differ");
  if (img.size() < 16 + n * rows * cols || lab.size() < 8 + n) throw DataFormatError("mnist: truncated data");

  Dataset d;
  d.class_names = {std::to_string(classes.first), std::to_string(classes.second)};
  for (std::size_t i = 0; i < n && (limit == 0 || d.size() < limit); ++i) {
    const int y = lab[8 + i];
    if (y != classes.first && y != classes.second) continue;
    d.features.push_back(pool_image(std::span<const std::uint8_t>(img.data() + 16 + i * 784, 784)));
    d.labels.push_back(y == classes.first ? 0 : 1);
  }
  if (d.features.empty()) throw EmptyDatasetError("mnist: no samples of the requested classes");
  return d;
}

Dataset make_synthetic(std::size_t samples, std::size_t features, std::size_t classes,
                       std::uint64_t seed) {
  if (samples < 1 || features < 1 || classes < 1)
    throw std::invalid_argument("make_synthetic: sizes must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.2, 0.8);
  std::normal_distribution<double> normal(0.0, 0.1);
  std::vector<std::vector<double>> centers(classes, std::vector<double>(features));
  for (auto& c : centers)
    for (auto& x : c) x = uniform(rng);
  Dataset d;
  for (std::size_t c = 0; c < classes; ++c) d.class_names.push_back("class" + std::to_string(c));
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t y = i % classes;
    std::vector<double> x(features);
    for (std::size_t j = 0; j < features; ++j) x[j] = std::clamp(centers[y][j] + normal(rng), 0.0, 1.0);
    d.features.push_back(std::move(x));
    d.labels.push_back(y);
  }
  return d;
}

Split stratified_split(std::span<const std::size_t> labels, double train_fraction,
                       std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw std::invalid_argument("stratified_split: train fraction must lie in (0, 1]");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  Split s;
  for (auto& [label, idx] : by_class) {
    shuffle(idx, rng);
    auto take = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    if (train_fraction < 1.0 && idx.size() >= 2) take = std::clamp<std::size_t>(take, 1, idx.size() - 1);
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

MinMaxScaler MinMaxScaler::fit(const Dataset& data, std::span<const std::size_t> rows) {
  if (rows.empty()) throw EmptyDatasetError("MinMaxScaler: no rows to fit");
  MinMaxScaler s;
  const std::size_t f = data.num_features();
  s.mins.assign(f, std::numeric_limits<double>::infinity());
  s.maxs.assign(f, -std::numeric_limits<double>::infinity());
  for (auto r : rows)
    for (std::size_t j = 0; j < f; ++j) {
      s.mins[j] = std::min(s.mins[j], data.features[r][j]);
      s.maxs[j] = std::max(s.maxs[j], data.features[r][j]);
    }
  return s;
}

std::vector<double> MinMaxScaler::transform(std::span<const double> x) const {
  if (x.size() != mins.size()) throw std::invalid_argument("MinMaxScaler: feature count mismatch");
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double span = maxs[j] - mins[j];
    out[j] = span > 0.0 ? std::clamp((x[j] - mins[j]) / span, 0.0, 1.0) : 0.0;
  }
  return out;
}

std::vector<Sample> make_samples(const Dataset& data, std::span<const std::size_t> rows,
                                 const MinMaxScaler* scaler, std::size_t output_dim) {
  if (output_dim < data.num_classes())
    throw std::invalid_argument("make_samples: output dimension " + std::to_string(output_dim) +
                                " smaller than the class count " +
                                std::to_string(data.num_classes()));
  std::vector<Sample> out;
  out.reserve(rows.size());
  for (auto r : rows) {
    const auto x = scaler ? scaler->transform(data.features[r]) : data.features[r];
    out.push_back({encode_rotational(x), LabelState(data.labels[r], output_dim)});
  }
  return out;
}

}  // namespace htn::cli
