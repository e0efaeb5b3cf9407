#pragma once

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "tabemb/error.hpp"
#include "tabemb/graph.hpp"

namespace tabemb {

using DenseMatrix = Eigen::MatrixXd;

inline constexpr std::size_t kDefaultDenseLimit = 20000;

/// Symmetric weighted adjacency matrix of the reduced graph.
inline DenseMatrix adjacency(const WeightedGraph& g, std::size_t max_nodes = kDefaultDenseLimit) {
  if (g.n > max_nodes) throw TooLarge(g.n, max_nodes);
  const auto n = static_cast<Eigen::Index>(g.n);
  DenseMatrix a = DenseMatrix::Zero(n, n);
  for (const auto& e : g.edges) {
    a(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j)) = e.weight;
    a(static_cast<Eigen::Index>(e.j), static_cast<Eigen::Index>(e.i)) = e.weight;
  }
  return a;
}

struct TransitionMatrix {
  DenseMatrix values;
  std::vector<std::size_t> isolated;  // all-zero rows, left at zero
};

/// Row-normalizes a non-negative matrix.
inline TransitionMatrix transition(const DenseMatrix& a) {
  if ((a.array() < 0.0).any()) throw InvalidArgument("transition matrix needs non-negative weights");
  TransitionMatrix t{a, {}};
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double s = a.row(i).sum();
    if (s == 0.0) {
      t.isolated.push_back(static_cast<std::size_t>(i));
      continue;
    }
    t.values.row(i) = a.row(i) / s;
  }
  return t;
}

/// Renormalized graph-convolution propagation D~^-1/2 (A + I) D~^-1/2, with
/// D~ the degree matrix of A + I.
inline DenseMatrix gcn_propagation(const DenseMatrix& a) {
  if ((a.array() < 0.0).any()) throw InvalidArgument("propagation needs non-negative weights");
  DenseMatrix tilde = a;
  tilde.diagonal().array() += 1.0;
  const Eigen::VectorXd inv_sqrt = tilde.rowwise().sum().array().rsqrt();
  return inv_sqrt.asDiagonal() * tilde * inv_sqrt.asDiagonal();
}

enum class TargetMode { transition, adjacency_scaled, sym_normalized };

/// Matrix the autoencoder reconstructs.
inline DenseMatrix reconstruction_target(const WeightedGraph& g, TargetMode mode,
                                         std::size_t max_nodes = kDefaultDenseLimit) {
  DenseMatrix a = adjacency(g, max_nodes);
  switch (mode) {
    case TargetMode::transition:
      return transition(a).values;
    case TargetMode::adjacency_scaled: {
      const double m = a.size() ? a.maxCoeff() : 0.0;
      if (m > 0.0) a /= m;
      return a;
    }
    case TargetMode::sym_normalized: {
      Eigen::VectorXd inv_sqrt = a.rowwise().sum();
      for (Eigen::Index i = 0; i < inv_sqrt.size(); ++i)
        inv_sqrt(i) = inv_sqrt(i) > 0.0 ? 1.0 / std::sqrt(inv_sqrt(i)) : 0.0;
      return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
    }
  }
  return a;
}

/// Row-major text grid, space separated, 17 significant digits.
inline void write_matrix(std::ostream& out, const DenseMatrix& m) {
  const auto old_flags = out.flags();
  const auto old_precision = out.precision();
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << m(i, j);
    }
    out << '\n';
  }
  out.flags(old_flags);
  out.precision(old_precision);
}

}  // namespace tabemb
