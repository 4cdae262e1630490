#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "bf/bricks.hpp"
#include "bf/error.hpp"

namespace bf::bricks {

namespace {

// Householder QR of a square row-major matrix; returns Q with every column
// multiplied by the sign of the matching diagonal entry of R.
void orthogonalize(std::span<double> a, std::size_t n) {
  std::vector<double> q(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) q[i * n + i] = 1.0;
  std::vector<double> v(n);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < n; ++i) norm += a[i * n + k] * a[i * n + k];
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = a[k * n + k] > 0.0 ? -norm : norm;
    double vnorm = 0.0;
    for (std::size_t i = k; i < n; ++i) {
      v[i] = a[i * n + k] - (i == k ? alpha : 0.0);
      vnorm += v[i] * v[i];
    }
    vnorm = std::sqrt(vnorm);
    if (vnorm == 0.0) continue;
    for (std::size_t i = k; i < n; ++i) v[i] /= vnorm;
    // A := (I - 2vv^T) A on rows k..n-1
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t i = k; i < n; ++i) dot += v[i] * a[i * n + j];
      for (std::size_t i = k; i < n; ++i) a[i * n + j] -= 2.0 * v[i] * dot;
    }
    // Q := Q (I - 2vv^T) on columns k..n-1
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t i = k; i < n; ++i) dot += q[r * n + i] * v[i];
      for (std::size_t i = k; i < n; ++i) q[r * n + i] -= 2.0 * dot * v[i];
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double sign = a[j * n + j] < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) q[r * n + j] *= sign;
  }
  std::copy(q.begin(), q.end(), a.begin());
}

}  // namespace

nlohmann::json Initializer::to_json() const {
  switch (kind) {
    case InitKind::Constant: return {{"scheme", "constant"}, {"value", value}};
    case InitKind::Uniform: return {{"scheme", "uniform"}, {"width", value}};
    case InitKind::Gaussian: return {{"scheme", "gaussian"}, {"std", value}};
    case InitKind::Sparse: return {{"scheme", "sparse"}, {"k", count}, {"std", value}};
    case InitKind::Orthogonal: return {{"scheme", "orthogonal"}};
  }
  return {};
}

Initializer Initializer::from_json(const nlohmann::json& j) {
  try {
    const std::string scheme = j.at("scheme").get<std::string>();
    if (scheme == "constant") return constant(j.at("value").get<double>());
    if (scheme == "uniform") return uniform(j.at("width").get<double>());
    if (scheme == "gaussian") return gaussian(j.at("std").get<double>());
    if (scheme == "sparse") return sparse(j.at("k").get<std::size_t>(), j.at("std").get<double>());
    if (scheme == "orthogonal") return orthogonal();
    throw ContractError("unknown initialization scheme '" + scheme + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("initializer: ") + e.what());
  }
}

void initialize_array(Array& a, const Initializer& init, Rng& rng) {
  auto values = a.values();
  switch (init.kind) {
    case InitKind::Constant:
      std::fill(values.begin(), values.end(), init.value);
      return;
    case InitKind::Uniform:
      for (double& v : values) v = init.value * (2.0 * rng.uniform() - 1.0);
      return;
    case InitKind::Gaussian:
      for (double& v : values) v = init.value * rng.normal();
      return;
    case InitKind::Sparse: {
      if (a.ndim() != 2) throw ContractError("sparse initialization needs a matrix");
      const std::size_t rows = a.shape()[0], cols = a.shape()[1];
      if (init.count > rows) {
        throw ContractError("sparse initialization: k=" + std::to_string(init.count) + " exceeds " +
                            std::to_string(rows) + " rows");
      }
      std::fill(values.begin(), values.end(), 0.0);
      std::vector<std::size_t> order(rows);
      for (std::size_t c = 0; c < cols; ++c) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = 0; i < init.count; ++i) {
          const std::size_t j = i + rng.bounded(static_cast<std::uint32_t>(rows - i));
          std::swap(order[i], order[j]);
          values[order[i] * cols + c] = init.value * rng.normal();
        }
      }
      return;
    }
    case InitKind::Orthogonal: {
      if (a.ndim() != 2 || a.shape()[0] != a.shape()[1]) {
        throw ContractError("orthogonal initialization needs a square matrix, got " +
                            shape_to_string(a.shape()));
      }
      for (double& v : values) v = rng.normal();
      orthogonalize(values, a.shape()[0]);
      return;
    }
  }
}

void initialize(Brick& brick, Rng& rng) {
  if (!brick.allocated()) throw ContractError("brick '" + brick.path() + "' is not allocated");
  for (Parameter* p : brick.all_parameters()) initialize_array(p->value, p->init, rng);
}

void initialize(Brick& brick, const Initializer& weights, Rng& rng) {
  brick.set_weights_init(weights);
  initialize(brick, rng);
}

}  // namespace bf::bricks
