#include "subrisk/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "subrisk/error.hpp"
#include "subrisk/random.hpp"

namespace subrisk {

namespace {

std::vector<std::size_t> count_classes(std::span<const int> labels) {
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) {
      throw Error(ErrorCode::InvalidArgument,
                  "negative label at row " + std::to_string(i));
    }
    const auto y = static_cast<std::size_t>(labels[i]);
    if (y >= counts.size()) counts.resize(y + 1, 0);
    ++counts[y];
  }
  for (std::size_t y = 0; y < counts.size(); ++y) {
    if (counts[y] == 0) {
      throw Error(ErrorCode::InvalidArgument,
                  "class " + std::to_string(y) + " has no examples (labels must be dense)");
    }
  }
  return counts;
}

std::string trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string_view rest(line);
  while (true) {
    const auto comma = rest.find(',');
    cells.push_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return cells;
}

bool parse_double(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

Dataset::Dataset(FeatureMatrix features, std::vector<int> labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
  if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
    std::ostringstream os;
    os << features_.rows() << " feature rows for " << labels_.size() << " labels";
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
  class_counts_ = count_classes(labels_);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  FeatureMatrix f(static_cast<Eigen::Index>(indices.size()), features_.cols());
  std::vector<int> y(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) throw Error(ErrorCode::InvalidArgument, "subset index out of range");
    f.row(static_cast<Eigen::Index>(r)) = features_.row(static_cast<Eigen::Index>(indices[r]));
    y[r] = labels_[indices[r]];
  }
  Dataset out(std::move(f), std::move(y));
  out.feature_names = feature_names;
  return out;
}

Dataset standardize(const Dataset& data) {
  FeatureMatrix f = data.features();
  if (f.rows() > 0) {
    for (Eigen::Index c = 0; c < f.cols(); ++c) {
      auto col = f.col(c);
      const double mean = col.mean();
      col.array() -= mean;
      const double var = col.squaredNorm() / static_cast<double>(f.rows());
      col /= std::sqrt(std::max(var, 1e-12));
    }
  }
  Dataset out(std::move(f), std::vector<int>(data.labels().begin(), data.labels().end()));
  out.feature_names = data.feature_names;
  return out;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "missing header row");
  const std::vector<std::string> header = split_row(line);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw Error(ErrorCode::ParseError, "label column '" + label_column + "' not in header");
  }
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());

  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_col) names.push_back(header[c]);
  }

  std::map<std::string, int> label_index;
  std::vector<int> labels;
  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_row(line);
    if (cells.size() != header.size()) {
      std::ostringstream os;
      os << "row " << row << ": expected " << header.size() << " cells, got " << cells.size();
      throw Error(ErrorCode::ParseError, os.str());
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_col) {
        const auto [it, inserted] =
            label_index.emplace(cells[c], static_cast<int>(label_index.size()));
        labels.push_back(it->second);
        continue;
      }
      double v = 0.0;
      if (!parse_double(cells[c], v)) {
        std::ostringstream os;
        os << "row " << row << ", column '" << header[c] << "': cannot parse '" << cells[c]
           << "' as a number";
        throw Error(ErrorCode::ParseError, os.str());
      }
      values.push_back(v);
    }
  }
  if (label_index.size() < 2) {
    throw Error(ErrorCode::SingleClassDataset, path.string() + " contains fewer than two classes");
  }

  const auto rows = static_cast<Eigen::Index>(labels.size());
  const auto cols = static_cast<Eigen::Index>(names.size());
  FeatureMatrix f = Eigen::Map<FeatureMatrix>(values.data(), rows, cols);
  Dataset raw(std::move(f), std::move(labels));
  raw.feature_names = std::move(names);
  return standardize(raw);
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  for (std::size_t c = 0; c < data.dim(); ++c) {
    out << (c < data.feature_names.size() ? data.feature_names[c] : "x" + std::to_string(c))
        << ',';
  }
  out << "label\n";
  out.precision(17);
  const auto& f = data.features();
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < data.dim(); ++c) {
      out << f(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) << ',';
    }
    out << data.labels()[r] << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Split stratified_split(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "split fraction must lie in (0, 1)");
  }
  const std::size_t k = data.num_classes();
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_class[static_cast<std::size_t>(data.labels()[i])].push_back(i);
  }

  Rng rng = make_rng(seed, 0x5711);
  std::vector<std::size_t> first, second;
  for (std::size_t y = 0; y < k; ++y) {
    auto& idx = by_class[y];
    if (idx.size() < 2) {
      throw Error(ErrorCode::ClassTooSmall,
                  "class " + std::to_string(y) + " has fewer than 2 examples");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto target = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(idx.size())));
    const std::size_t take = std::clamp<std::size_t>(target, 1, idx.size() - 1);
    first.insert(first.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    second.insert(second.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  Dataset a = data.subset(first);
  Dataset b = data.subset(second);
  return Split{std::move(a), std::move(b), std::move(first), std::move(second)};
}

SubgroupPartition partition_by_class(const Dataset& data, ReferenceKind reference) {
  const std::size_t k = data.num_classes();
  std::vector<std::vector<std::size_t>> members(k);
  std::vector<std::size_t> assignment(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto y = static_cast<std::size_t>(data.labels()[i]);
    assignment[i] = y;
    members[y].push_back(i);
  }
  std::vector<std::size_t> sizes(data.class_counts().begin(), data.class_counts().end());
  ReferenceDistribution pi = reference == ReferenceKind::ClassRatio
                                 ? ReferenceDistribution::from_counts(sizes)
                                 : ReferenceDistribution::uniform(k);
  return SubgroupPartition{std::move(assignment), std::move(members), std::move(sizes),
                           std::move(pi)};
}

SubgroupPartition partition_per_example(const Dataset& data) {
  const std::size_t m = data.size();
  std::vector<std::size_t> assignment(m);
  std::iota(assignment.begin(), assignment.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> members(m);
  for (std::size_t i = 0; i < m; ++i) members[i] = {i};
  return SubgroupPartition{std::move(assignment), std::move(members), std::vector<std::size_t>(m, 1),
                           ReferenceDistribution::uniform(m)};
}

Dataset synth_imbalanced(std::span<const std::size_t> n_per_class, std::size_t dim,
                         double separation, std::uint64_t seed) {
  if (n_per_class.size() < 2) throw Error(ErrorCode::BadSpec, "need at least two classes");
  if (dim == 0) throw Error(ErrorCode::BadSpec, "feature dimension must be positive");
  if (!(separation >= 0.0) || !std::isfinite(separation)) {
    throw Error(ErrorCode::BadSpec, "separation must be finite and non-negative");
  }
  for (std::size_t y = 0; y < n_per_class.size(); ++y) {
    if (n_per_class[y] < 2) {
      throw Error(ErrorCode::BadSpec, "class " + std::to_string(y) + " needs at least 2 examples");
    }
  }
  const std::size_t m = std::accumulate(n_per_class.begin(), n_per_class.end(), std::size_t{0});

  std::vector<int> labels;
  labels.reserve(m);
  for (std::size_t y = 0; y < n_per_class.size(); ++y) {
    labels.insert(labels.end(), n_per_class[y], static_cast<int>(y));
  }
  Rng rng = make_rng(seed, 0x5e7);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::normal_distribution<double> noise(0.0, 1.0);
  FeatureMatrix f(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(dim));
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    for (Eigen::Index c = 0; c < f.cols(); ++c) f(r, c) = noise(rng);
    f(r, 0) += separation * labels[static_cast<std::size_t>(r)];
  }
  return Dataset(std::move(f), std::move(labels));
}

}  // namespace subrisk
