#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "subrisk/data.hpp"
#include "subrisk/error.hpp"

using namespace subrisk;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "subrisk_test_data";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

Dataset labelled(std::vector<int> labels) {
  FeatureMatrix x(static_cast<Eigen::Index>(labels.size()), 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = static_cast<double>(i);
    x(i, 1) = static_cast<double>(i % 3);
  }
  return Dataset(std::move(x), std::move(labels));
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("dataset invariants") {
  CHECK(code_of([] { labelled({0, 2}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { Dataset(FeatureMatrix(3, 1), std::vector<int>{0, 1}); }) ==
        ErrorCode::DimensionMismatch);
  const Dataset d = labelled({1, 0, 1, 1});
  CHECK(d.size() == 4);
  CHECK(d.num_classes() == 2);
  CHECK(d.class_counts()[0] == 1);
  CHECK(d.class_counts()[1] == 3);
}

TEST_CASE("load_csv toy file") {
  const auto p = write_temp("toy.csv", "a,b,y\n1.5,2,cat\n-1,0.5,dog\n");
  const Dataset d = load_csv(p, "y");
  CHECK(d.size() == 2);
  CHECK(d.num_classes() == 2);
  CHECK(d.dim() == 2);
  CHECK(d.labels()[0] == 0);
  CHECK(d.labels()[1] == 1);
  // Standardized: +-1 for two distinct values.
  CHECK(d.features()(0, 0) == doctest::Approx(1.0));
  CHECK(d.features()(1, 0) == doctest::Approx(-1.0));
  CHECK(d.feature_names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("load_csv relabels in first-appearance order") {
  const auto p = write_temp("order.csv", "label,x\nzeta,1\nalpha,2\nzeta,3\nmid,4\n");
  const Dataset d = load_csv(p, "label");
  CHECK(std::vector<int>(d.labels().begin(), d.labels().end()) == std::vector<int>{0, 1, 0, 2});
}

TEST_CASE("load_csv errors") {
  CHECK(code_of([] { load_csv("/nonexistent/file.csv", "y"); }) == ErrorCode::FileNotFound);
  const auto bad = write_temp("bad.csv", "a,y\n1,0\nfoo,1\n");
  try {
    load_csv(bad, "y");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    const std::string what = e.what();
    CHECK(what.find("row 2") != std::string::npos);
    CHECK(what.find("'a'") != std::string::npos);
  }
  const auto single = write_temp("single.csv", "a,y\n1,0\n2,0\n");
  CHECK(code_of([&] { load_csv(single, "y"); }) == ErrorCode::SingleClassDataset);
  const auto nolabel = write_temp("nolabel.csv", "a,b\n1,0\n2,1\n");
  CHECK(code_of([&] { load_csv(nolabel, "y"); }) == ErrorCode::ParseError);
}

TEST_CASE("constant column standardizes to zeros") {
  const auto p = write_temp("const.csv", "a,b,y\n3,1,0\n3,2,1\n3,5,0\n");
  const Dataset d = load_csv(p, "y");
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(d.features()(i, 0) == 0.0);
}

TEST_CASE("standardization is idempotent") {
  const Dataset d = synth_imbalanced(std::vector<std::size_t>{50, 30}, 4, 1.5, 7);
  const Dataset s1 = standardize(d);
  const Dataset s2 = standardize(s1);
  CHECK((s1.features() - s2.features()).cwiseAbs().maxCoeff() <= 1e-10);
  for (Eigen::Index c = 0; c < s1.features().cols(); ++c) {
    CHECK(s1.features().col(c).mean() == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("write_csv round trip") {
  const Dataset d = synth_imbalanced(std::vector<std::size_t>{6, 4}, 3, 2.0, 1);
  const fs::path p = fs::temp_directory_path() / "subrisk_test_data" / "rt.csv";
  write_csv(d, p);
  const Dataset back = load_csv(p, "label");
  CHECK(back.size() == d.size());
  CHECK(back.dim() == d.dim());
  // Labels re-indexed by first appearance; the class partition is preserved.
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.size(); ++j) {
      CHECK((d.labels()[i] == d.labels()[j]) == (back.labels()[i] == back.labels()[j]));
    }
  }
  CHECK((standardize(d).features() - back.features()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("stratified split rounding") {
  std::vector<int> labels(100, 0);
  std::fill(labels.begin() + 90, labels.end(), 1);
  const Dataset d = labelled(labels);
  const Split s = stratified_split(d, 0.8, 5);
  CHECK(s.first.class_counts()[0] == 72);
  CHECK(s.first.class_counts()[1] == 8);
  CHECK(s.second.class_counts()[0] == 18);
  CHECK(s.second.class_counts()[1] == 2);

  std::vector<int> even(200, 0);
  std::fill(even.begin() + 100, even.end(), 1);
  const Split h = stratified_split(labelled(even), 0.5, 5);
  CHECK(h.first.class_counts()[0] == 50);
  CHECK(h.first.class_counts()[1] == 50);
  CHECK(h.second.class_counts()[0] == 50);
}

TEST_CASE("stratified split keeps one per class and recomposes") {
  const Dataset d = labelled({0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1});
  const Split s = stratified_split(d, 0.9, 3);
  CHECK(s.first.class_counts()[1] == 1);
  CHECK(s.second.class_counts()[1] == 1);
  std::set<std::size_t> all(s.first_indices.begin(), s.first_indices.end());
  for (std::size_t i : s.second_indices) CHECK(all.insert(i).second);
  CHECK(all.size() == d.size());
  CHECK(std::is_sorted(s.first_indices.begin(), s.first_indices.end()));
  for (std::size_t r = 0; r < s.first_indices.size(); ++r) {
    CHECK(s.first.labels()[r] == d.labels()[s.first_indices[r]]);
  }
  CHECK(code_of([&] { stratified_split(labelled({0, 0, 1}), 0.5, 1); }) == ErrorCode::ClassTooSmall);
  CHECK(code_of([&] { stratified_split(d, 1.0, 1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("stratified split is deterministic per seed") {
  const Dataset d = synth_imbalanced(std::vector<std::size_t>{40, 10}, 2, 1.0, 2);
  const Split a = stratified_split(d, 0.5, 9);
  const Split b = stratified_split(d, 0.5, 9);
  const Split c = stratified_split(d, 0.5, 10);
  CHECK(a.first_indices == b.first_indices);
  CHECK(a.first_indices != c.first_indices);
}

TEST_CASE("partition by class") {
  const Dataset d = labelled({0, 0, 0, 1});
  const auto p = partition_by_class(d, ReferenceKind::ClassRatio);
  CHECK(p.num_subgroups() == 2);
  CHECK(p.sizes == std::vector<std::size_t>{3, 1});
  CHECK(p.pi[0] == 0.75);
  CHECK(p.pi[1] == 0.25);
  CHECK(p.members[1] == std::vector<std::size_t>{3});
  const auto u = partition_by_class(d, ReferenceKind::Uniform);
  CHECK(u.pi[0] == 0.5);
  CHECK(u.pi[1] == 0.5);
}

TEST_CASE("partition by class on balance-scale ratios") {
  // Class ratios .08/.46/.46 on m = 625.
  std::vector<int> labels;
  for (int i = 0; i < 50; ++i) labels.push_back(0);
  for (int i = 0; i < 287; ++i) labels.push_back(1);
  for (int i = 0; i < 288; ++i) labels.push_back(2);
  const auto p = partition_by_class(labelled(labels), ReferenceKind::ClassRatio);
  CHECK(std::abs(p.pi[0] - 0.08) <= 1.0 / 625);
  CHECK(std::abs(p.pi[1] - 0.46) <= 1.0 / 625);
  CHECK(std::abs(p.pi[2] - 0.46) <= 1.0 / 625);
  for (std::size_t a = 0; a < 3; ++a) CHECK(p.pi[a] == static_cast<double>(p.sizes[a]) / 625.0);
}

TEST_CASE("partition per example") {
  const Dataset d = labelled({0, 1, 0, 1, 1});
  const auto p = partition_per_example(d);
  CHECK(p.num_subgroups() == 5);
  for (std::size_t a = 0; a < 5; ++a) {
    CHECK(p.sizes[a] == 1);
    CHECK(p.pi[a] == doctest::Approx(0.2));
    CHECK(p.assignment[a] == a);
  }
  FeatureMatrix x(1, 1);
  x(0, 0) = 1.0;
  const auto one = partition_per_example(Dataset(x, {0}));
  CHECK(one.pi[0] == 1.0);
}

TEST_CASE("synthetic data") {
  const std::vector<std::size_t> counts{960, 40};
  const Dataset a = synth_imbalanced(counts, 5, 2.0, 3);
  const Dataset b = synth_imbalanced(counts, 5, 2.0, 3);
  CHECK(a.size() == 1000);
  CHECK(a.class_counts()[0] == 960);
  CHECK(a.class_counts()[1] == 40);
  CHECK(a.features() == b.features());
  CHECK(std::equal(a.labels().begin(), a.labels().end(), b.labels().begin()));

  // Class means sit separation apart on the first axis.
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    (a.labels()[i] == 0 ? m0 : m1) += a.features()(static_cast<Eigen::Index>(i), 0);
  }
  m0 /= 960.0;
  m1 /= 40.0;
  CHECK(std::abs((m1 - m0) - 2.0) < 0.6);

  const std::vector<std::size_t> one{10};
  const std::vector<std::size_t> tiny{10, 1};
  CHECK(code_of([&] { synth_imbalanced(one, 2, 1.0, 1); }) == ErrorCode::BadSpec);
  CHECK(code_of([&] { synth_imbalanced(tiny, 2, 1.0, 1); }) == ErrorCode::BadSpec);
  CHECK(code_of([&] { synth_imbalanced(counts, 0, 1.0, 1); }) == ErrorCode::BadSpec);
}

TEST_CASE("separation zero carries no class signal") {
  const std::vector<std::size_t> counts{500, 500};
  const Dataset d = synth_imbalanced(counts, 1, 0.0, 4);
  // Threshold classifier at zero: balanced accuracy near chance.
  std::size_t hit0 = 0, hit1 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool pred1 = d.features()(static_cast<Eigen::Index>(i), 0) > 0.0;
    if (d.labels()[i] == 0 && !pred1) ++hit0;
    if (d.labels()[i] == 1 && pred1) ++hit1;
  }
  const double bal = 0.5 * (hit0 / 500.0 + hit1 / 500.0);
  CHECK(std::abs(bal - 0.5) < 0.07);
}
