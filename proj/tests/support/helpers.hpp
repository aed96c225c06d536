#pragma once

// Shared fixtures for the test suite: synthetic model specs, a scratch
// directory, file IO helpers, and an Eigen-free weighted-least-squares oracle
// used to cross-check the surrogate fits.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <focuslime/model.hpp>
#include <focuslime/surrogate.hpp>

namespace testutil {

inline focuslime::ModelSpec keyword_and_spec(std::vector<std::string> keywords,
                                             double p_on = 0.95, double p_off = 0.05,
                                             std::string id = "kw-target") {
  auto model = std::make_shared<focuslime::SyntheticModel>();
  model->kind = focuslime::SyntheticModel::Kind::KeywordAnd;
  model->keywords = std::move(keywords);
  model->p_on = p_on;
  model->p_off = p_off;
  focuslime::ModelSpec spec;
  spec.backend = focuslime::Backend::Synthetic;
  spec.model_id = std::move(id);
  spec.synthetic = model;
  return spec;
}

inline focuslime::ModelSpec weighted_linear_spec(std::map<std::string, double> weights,
                                                 double bias = 0.0,
                                                 std::string id = "wl-target") {
  auto model = std::make_shared<focuslime::SyntheticModel>();
  model->kind = focuslime::SyntheticModel::Kind::WeightedLinear;
  model->weights = std::move(weights);
  model->bias = bias;
  focuslime::ModelSpec spec;
  spec.backend = focuslime::Backend::Synthetic;
  spec.model_id = std::move(id);
  spec.synthetic = model;
  return spec;
}

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("focuslime-test-" + std::to_string(rd()) + "-" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// Gaussian elimination with partial pivoting; small dense systems only.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> A,
                                       std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t row = col + 1; row < n; ++row) {
      if (std::abs(A[row][col]) > std::abs(A[pivot][col])) pivot = row;
    }
    std::swap(A[col], A[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t row = col + 1; row < n; ++row) {
      const double factor = A[row][col] / A[col][col];
      for (std::size_t k = col; k < n; ++k) A[row][k] -= factor * A[col][k];
      b[row] -= factor * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t row = n; row-- > 0;) {
    double sum = b[row];
    for (std::size_t k = row + 1; k < n; ++k) sum -= A[row][k] * x[k];
    x[row] = sum / A[row][row];
  }
  return x;
}

struct WlsResult {
  std::vector<double> coefficients;  // per active coordinate, document order
  double intercept = 0.0;
};

// Independent oracle for the weighted ridge with unpenalized intercept:
// augment the active design with a constant column and solve the normal
// equations (Z' W Z + lambda * diag(1..1, 0)) b = Z' W y directly.
inline WlsResult wls_oracle(const std::vector<focuslime::WeightedSample>& samples,
                            const focuslime::FocusMask& focus, double lambda) {
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < focus.size(); ++i) {
    if (focus.bits[i]) active.push_back(i);
  }
  const std::size_t m = active.size();
  const std::size_t dim = m + 1;  // intercept last
  std::vector<std::vector<double>> normal(dim, std::vector<double>(dim, 0.0));
  std::vector<double> rhs(dim, 0.0);
  for (const focuslime::WeightedSample& sample : samples) {
    std::vector<double> z(dim, 1.0);
    for (std::size_t j = 0; j < m; ++j) {
      z[j] = static_cast<double>(sample.mask.bits[active[j]]);
    }
    for (std::size_t a = 0; a < dim; ++a) {
      for (std::size_t b = 0; b < dim; ++b) normal[a][b] += sample.weight * z[a] * z[b];
      rhs[a] += sample.weight * z[a] * sample.prediction;
    }
  }
  for (std::size_t j = 0; j < m; ++j) normal[j][j] += lambda;
  std::vector<double> solution = solve_dense(std::move(normal), std::move(rhs));
  WlsResult result;
  result.coefficients.assign(solution.begin(), solution.begin() + m);
  result.intercept = solution[m];
  return result;
}

// All 2^m masks over an m-bit active space embedded in an n-bit document,
// frozen coordinates pinned to 1. Deterministic enumeration order.
inline std::vector<focuslime::Mask> enumerate_masks(const focuslime::FocusMask& focus) {
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < focus.size(); ++i) {
    if (focus.bits[i]) active.push_back(i);
  }
  std::vector<focuslime::Mask> masks;
  const std::size_t count = std::size_t(1) << active.size();
  for (std::size_t pattern = 0; pattern < count; ++pattern) {
    focuslime::Mask mask = focuslime::Mask::all_ones(focus.size());
    for (std::size_t j = 0; j < active.size(); ++j) {
      mask.bits[active[j]] = (pattern >> j) & 1u;
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

}  // namespace testutil
