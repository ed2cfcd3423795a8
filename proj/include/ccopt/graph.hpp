#pragma once

#include <Eigen/Dense>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccopt/problem.hpp"

namespace ccopt {

struct Edge {
  int i = 0;
  int j = 0;
  double weight = 1.0;
};

class DisconnectedGraphError : public std::runtime_error {
 public:
  explicit DisconnectedGraphError(const std::string& what) : std::runtime_error(what) {}
};

/// Undirected weighted communication graph with its Laplacian.
struct Network {
  int n = 0;
  std::vector<Edge> edges;
  Matrix laplacian;  // n x n

  static Network from_edges(int n, std::vector<Edge> edges) {
    if (n < 2) throw std::invalid_argument("network: need at least two nodes");
    Network net;
    net.n = n;
    net.laplacian = Matrix::Zero(n, n);
    for (Edge& e : edges) {
      if (e.i == e.j) throw std::invalid_argument("network: self-loops not allowed");
      if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n)
        throw std::invalid_argument("network: edge endpoint out of range");
      if (!(e.weight > 0.0)) throw std::invalid_argument("network: edge weight must be > 0");
      if (e.i > e.j) std::swap(e.i, e.j);
      if (net.laplacian(e.i, e.j) != 0.0)
        throw std::invalid_argument("network: duplicate edge");
      net.laplacian(e.i, e.j) = -e.weight;
      net.laplacian(e.j, e.i) = -e.weight;
      net.laplacian(e.i, e.i) += e.weight;
      net.laplacian(e.j, e.j) += e.weight;
    }
    net.edges = std::move(edges);
    return net;
  }

  std::vector<int> degrees() const {
    std::vector<int> deg(static_cast<std::size_t>(n), 0);
    for (const Edge& e : edges) {
      ++deg[static_cast<std::size_t>(e.i)];
      ++deg[static_cast<std::size_t>(e.j)];
    }
    return deg;
  }
};

// Cycle graph: edges (i, i+1) plus the closing edge (0, n-1), unit weights.
inline Network build_ring_plus(int n) {
  if (n < 3) throw std::invalid_argument("ring_plus: n must be >= 3");
  std::vector<Edge> edges;
  for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, 1.0});
  edges.push_back({0, n - 1, 1.0});
  return Network::from_edges(n, std::move(edges));
}

inline Network build_path(int n) {
  if (n < 2) throw std::invalid_argument("path: n must be >= 2");
  std::vector<Edge> edges;
  for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, 1.0});
  return Network::from_edges(n, std::move(edges));
}

inline Network build_complete(int n) {
  if (n < 2) throw std::invalid_argument("complete: n must be >= 2");
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) edges.push_back({i, j, 1.0});
  return Network::from_edges(n, std::move(edges));
}

inline std::vector<std::vector<int>> connected_components(const Network& net) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(net.n));
  for (const Edge& e : net.edges) {
    adj[static_cast<std::size_t>(e.i)].push_back(e.j);
    adj[static_cast<std::size_t>(e.j)].push_back(e.i);
  }
  std::vector<int> label(static_cast<std::size_t>(net.n), -1);
  std::vector<std::vector<int>> comps;
  for (int s = 0; s < net.n; ++s) {
    if (label[static_cast<std::size_t>(s)] >= 0) continue;
    comps.emplace_back();
    std::vector<int> stack{s};
    label[static_cast<std::size_t>(s)] = static_cast<int>(comps.size()) - 1;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      comps.back().push_back(v);
      for (int w : adj[static_cast<std::size_t>(v)]) {
        if (label[static_cast<std::size_t>(w)] < 0) {
          label[static_cast<std::size_t>(w)] = static_cast<int>(comps.size()) - 1;
          stack.push_back(w);
        }
      }
    }
  }
  return comps;
}

/// Blockwise action of the consensus operator H (x) I_q on a stacked vector
/// of n blocks of size q. The Kronecker product is never materialized:
///   out_i = sum_j H_ij y_j = sum_{j ~ i} w_ij (y_i - y_j).
inline Vector apply_laplacian(const Network& net, const Vector& y) {
  if (net.n == 0 || y.size() % net.n != 0)
    throw std::invalid_argument("apply_laplacian: vector length must be a multiple of n");
  const Eigen::Index q = y.size() / net.n;
  Vector out = Vector::Zero(y.size());
  for (const Edge& e : net.edges) {
    const auto yi = y.segment(e.i * q, q);
    const auto yj = y.segment(e.j * q, q);
    out.segment(e.i * q, q) += e.weight * (yi - yj);
    out.segment(e.j * q, q) += e.weight * (yj - yi);
  }
  return out;
}

struct SpectralData {
  double norm_w = 0.0;     // largest Laplacian eigenvalue
  double lambda2_w = 0.0;  // smallest nonzero eigenvalue (connectivity)
  Matrix pinv;             // Moore-Penrose pseudoinverse of the Laplacian
};

/// Dense eigendecomposition of the Laplacian. Throws if the graph is
/// disconnected, listing the components.
inline SpectralData spectral(const Network& net) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(net.laplacian);
  const Vector& ev = es.eigenvalues();
  const double norm_w = ev(ev.size() - 1);
  const double tol = 1e-9 * std::max(norm_w, 1.0);

  int zero_count = 0;
  while (zero_count < ev.size() && ev(zero_count) <= tol) ++zero_count;
  if (zero_count != 1) {
    const auto comps = connected_components(net);
    std::ostringstream msg;
    msg << "graph is disconnected (" << comps.size() << " components:";
    for (const auto& c : comps) {
      msg << " {";
      for (std::size_t k = 0; k < c.size(); ++k) msg << (k ? "," : "") << c[k];
      msg << "}";
    }
    msg << ")";
    throw DisconnectedGraphError(msg.str());
  }

  SpectralData s;
  s.norm_w = norm_w;
  s.lambda2_w = ev(1);
  Vector inv = Vector::Zero(ev.size());
  for (Eigen::Index k = 0; k < ev.size(); ++k)
    if (ev(k) > tol) inv(k) = 1.0 / ev(k);
  s.pinv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  return s;
}

}  // namespace ccopt
