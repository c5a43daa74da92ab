#include <algorithm>
#include <cmath>
#include <random>

#include <doctest.h>

#include "corrbalance/class_graph.hpp"

using namespace corrbalance;

TEST_SUITE_BEGIN("class_graph");

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

}  // namespace

TEST_CASE("center_loss hand cases") {
  Matrix centers(2, 2, Vector{0.0, 0.0, 1.0, 1.0});

  Matrix at_center(1, 2, Vector{1.0, 1.0});
  CHECK(center_loss(at_center, {1}, centers) == 0.0);

  Matrix unit(1, 2, Vector{1.0, 0.0});
  CHECK(center_loss(unit, {0}, centers) == doctest::Approx(1.0));

  // Two samples each squared-distance 1 from their centers.
  Matrix two(2, 2, Vector{1.0, 0.0, 1.0, 0.0});
  CHECK(center_loss(two, {0, 1}, centers) == doctest::Approx(1.0));

  CHECK_THROWS_AS(center_loss(unit, {5}, centers), LabelError);
}

TEST_CASE("center_loss_grad hand cases and finite differences") {
  Matrix centers(2, 2, Vector{0.0, 0.0, 1.0, 1.0});

  // Features at their centers: a stationary point.
  Matrix at_centers(2, 2, Vector{0.0, 0.0, 1.0, 1.0});
  const Matrix zero = center_loss_grad(at_centers, {0, 1}, centers);
  for (double v : zero.data()) CHECK(v == 0.0);

  Matrix unit(1, 2, Vector{1.0, 0.0});
  Matrix single_center(1, 2, Vector{0.0, 0.0});
  const Matrix grad = center_loss_grad(unit, {0}, single_center);
  CHECK(grad(0, 0) == doctest::Approx(-2.0));
  CHECK(grad(0, 1) == doctest::Approx(0.0));

  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix f = random_matrix(4, 3, rng);
    const Matrix v = random_matrix(3, 3, rng);
    const std::vector<int> labels{0, 1, 2, 1};
    const Matrix analytic = center_loss_grad(f, labels, v);
    auto objective = [&](std::span<const double> flat) {
      return center_loss(f, labels, Matrix(3, 3, Vector(flat.begin(), flat.end())));
    };
    CHECK(finite_diff_check(objective, v.data(), analytic.data(), 1e-5, 1e-6).passed);
  }
}

TEST_CASE("center_loss_grad treats features as constants") {
  // Perturbing features changes the loss value, but the op exposes no
  // feature gradient at all: only a centers-shaped matrix comes back.
  std::mt19937_64 rng(29);
  const Matrix f = random_matrix(3, 2, rng);
  const Matrix v = random_matrix(2, 2, rng);
  const std::vector<int> labels{0, 1, 0};
  Matrix nudged = f;
  nudged(0, 0) += 0.5;
  CHECK(center_loss(nudged, labels, v) != center_loss(f, labels, v));
  const Matrix grad = center_loss_grad(f, labels, v);
  CHECK(grad.rows() == v.rows());
  CHECK(grad.cols() == v.cols());
}

TEST_CASE("update_centers_learnt") {
  ClassGraph graph(2, 2, NormalizationMode::MinMax, 1e-6, 3);

  // Zero-gradient batch leaves centers unchanged.
  Matrix at_centers = graph.centers();
  std::vector<int> labels{0, 1};
  const Matrix before = graph.centers();
  graph.update_centers_learnt(at_centers, labels, 0.25);
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(graph.centers().data()[i] == before.data()[i]);
  }
  CHECK(graph.update_count() == 1);

  // One-class batch moves the center toward the batch mean by 2*lr_c.
  Matrix batch(2, 2, Vector{1.0, 0.0, 3.0, 0.0});  // mean (2, 0)
  ClassGraph g2(1, 2, NormalizationMode::MinMax, 1e-6, 4);
  g2.set_centers(Matrix(1, 2, Vector{0.0, 0.0}));
  g2.update_centers_learnt(batch, {0, 0}, 0.25);
  CHECK(g2.centers()(0, 0) == doctest::Approx(2.0 * 0.25 * 2.0));
  CHECK(g2.centers()(0, 1) == doctest::Approx(0.0));

  // Repeated updates on a fixed batch converge to the class mean.
  for (int step = 0; step < 200; ++step) g2.update_centers_learnt(batch, {0, 0}, 0.25);
  CHECK(g2.centers()(0, 0) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("update_centers_average") {
  ClassGraph graph(3, 2, NormalizationMode::MinMax, 1e-6, 5);
  const Matrix before = graph.centers();

  // Single sample per class pins centers to those samples.
  Matrix singles(2, 2, Vector{1.0, 2.0, 3.0, 4.0});
  graph.update_centers_average(singles, {0, 1});
  CHECK(graph.centers()(0, 0) == 1.0);
  CHECK(graph.centers()(1, 1) == 4.0);
  // Absent class keeps its previous center.
  CHECK(graph.centers()(2, 0) == before(2, 0));

  // Two samples per class average to the midpoint.
  Matrix pairs(2, 2, Vector{0.0, 0.0, 4.0, 6.0});
  graph.update_centers_average(pairs, {0, 0});
  CHECK(graph.centers()(0, 0) == doctest::Approx(2.0));
  CHECK(graph.centers()(0, 1) == doctest::Approx(3.0));

  CHECK_THROWS_AS(graph.update_centers_average(Matrix(0, 2), {}), InputError);
}

TEST_CASE("refresh_edges hand case") {
  ClassGraph graph(3, 1, NormalizationMode::MinMax, 1e-6, 6);
  graph.set_centers(Matrix(3, 1, Vector{0.0, 3.0, 4.0}));
  graph.refresh_edges();

  const Matrix& e = graph.edges();
  CHECK(e(0, 0) == 0.0);
  CHECK(e(0, 1) == doctest::Approx(3.0));
  CHECK(e(0, 2) == doctest::Approx(4.0));
  CHECK(e(1, 2) == doctest::Approx(1.0));
  const Vector& u = graph.global_correlation();
  CHECK(u[0] == doctest::Approx(7.0));
  CHECK(u[1] == doctest::Approx(4.0));
  CHECK(u[2] == doctest::Approx(5.0));
}

TEST_CASE("refresh_edges degenerate and idempotent") {
  ClassGraph graph(3, 2, NormalizationMode::MinMax, 1e-6, 7);
  graph.set_centers(Matrix(3, 2, 0.5));
  graph.refresh_edges();
  for (double t : graph.tau()) CHECK(t == 1.0);

  ClassGraph g2(4, 3, NormalizationMode::Softmax, 1e-6, 8);
  g2.refresh_edges();
  const Matrix edges = g2.edges();
  const Vector tau = g2.tau();
  g2.refresh_edges();
  for (std::size_t i = 0; i < edges.size(); ++i) CHECK(g2.edges().data()[i] == edges.data()[i]);
  for (std::size_t i = 0; i < tau.size(); ++i) CHECK(g2.tau()[i] == tau[i]);
}

TEST_CASE("normalize_correlation hand cases") {
  const Vector u{7.0, 4.0, 5.0};
  const Vector minmax = normalize_correlation(u, NormalizationMode::MinMax, 1e-6);
  CHECK(minmax[0] == doctest::Approx((7.0 - 4.0 + 1e-6) / 3.0));
  CHECK(minmax[1] == doctest::Approx(1e-6 / 3.0));
  CHECK(minmax[2] == doctest::Approx((1.0 + 1e-6) / 3.0));

  const Vector scaling = normalize_correlation(u, NormalizationMode::Scaling, 1e-6);
  CHECK(scaling[0] == doctest::Approx(1.0));
  CHECK(scaling[1] == doctest::Approx(4.0 / 7.0));
  CHECK(scaling[2] == doctest::Approx(5.0 / 7.0));

  for (auto mode : {NormalizationMode::MinMax, NormalizationMode::Softmax,
                    NormalizationMode::Scaling}) {
    const Vector degenerate = normalize_correlation(Vector{2.0, 2.0, 2.0}, mode, 1e-6);
    for (double t : degenerate) CHECK(t == 1.0);
  }
  CHECK_THROWS_AS(normalize_correlation(u, NormalizationMode::MinMax, 0.0), ConfigError);
}

TEST_CASE("normalize_correlation preserves order and minmax bounds") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> dist(0.0, 50.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vector u(6);
    for (double& v : u) v = dist(rng);
    for (auto mode : {NormalizationMode::MinMax, NormalizationMode::Softmax,
                      NormalizationMode::Scaling}) {
      const Vector tau = normalize_correlation(u, mode, 1e-6);
      for (double t : tau) CHECK(t > 0.0);
      for (std::size_t i = 0; i < u.size(); ++i) {
        for (std::size_t j = 0; j < u.size(); ++j) {
          if (u[i] > u[j]) CHECK(tau[i] > tau[j]);
        }
      }
    }
    const auto [mn, mx] = std::minmax_element(u.begin(), u.end());
    if (*mx > *mn) {
      const Vector tau = normalize_correlation(u, NormalizationMode::MinMax, 1e-6);
      const auto [tmn, tmx] = std::minmax_element(tau.begin(), tau.end());
      CHECK(*tmn == doctest::Approx(1e-6 / (*mx - *mn)));
      CHECK(*tmx == doctest::Approx(1.0 + 1e-6 / (*mx - *mn)));
    }
  }
}

TEST_CASE("brute-force oracle equivalence on random centers") {
  std::mt19937_64 rng(37);
  std::uniform_int_distribution<std::size_t> csize(2, 16);
  std::uniform_int_distribution<std::size_t> dsize(1, 8);
  std::uniform_int_distribution<int> mode_pick(0, 2);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t c = csize(rng);
    const std::size_t d = dsize(rng);
    const auto mode = static_cast<NormalizationMode>(mode_pick(rng));
    ClassGraph graph(c, d, mode, 1e-6, 1000 + trial);
    graph.set_centers(random_matrix(c, d, rng));
    graph.refresh_edges();

    // Straightforward recomputation, kept independent of the implementation.
    Matrix edges(c, c);
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t j = 0; j < c; ++j) {
        double s = 0.0;
        for (std::size_t x = 0; x < d; ++x) {
          const double diff = graph.centers()(j, x) - graph.centers()(k, x);
          s += diff * diff;
        }
        edges(k, j) = std::sqrt(s);
      }
    }
    Vector u(c, 0.0);
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < c; ++j) u[i] += edges(i, j);
    }
    const double mn = *std::min_element(u.begin(), u.end());
    const double mx = *std::max_element(u.begin(), u.end());
    Vector tau(c, 1.0);
    if (mx > mn) {
      if (mode == NormalizationMode::MinMax) {
        for (std::size_t i = 0; i < c; ++i) tau[i] = (u[i] - mn + 1e-6) / (mx - mn);
      } else if (mode == NormalizationMode::Softmax) {
        double denom = 0.0;
        for (double v : u) denom += std::exp(v - mx);
        for (std::size_t i = 0; i < c; ++i) tau[i] = std::exp(u[i] - mx) / denom;
      } else {
        for (std::size_t i = 0; i < c; ++i) tau[i] = u[i] / mx;
      }
    }
    for (std::size_t i = 0; i < c * c; ++i) {
      CHECK(graph.edges().data()[i] ==
            doctest::Approx(edges.data()[i]).epsilon(1e-9));
    }
    for (std::size_t i = 0; i < c; ++i) {
      CHECK(graph.global_correlation()[i] == doctest::Approx(u[i]).epsilon(1e-9));
      CHECK(graph.tau()[i] == doctest::Approx(tau[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("translation leaves center loss and edges unchanged") {
  std::mt19937_64 rng(41);
  const Matrix f = random_matrix(5, 3, rng);
  const Matrix v = random_matrix(4, 3, rng);
  const std::vector<int> labels{0, 1, 2, 3, 1};
  const Vector shift{0.7, -1.3, 2.1};

  Matrix f2 = f;
  Matrix v2 = v;
  for (std::size_t i = 0; i < f2.rows(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) f2(i, j) += shift[j];
  }
  for (std::size_t i = 0; i < v2.rows(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) v2(i, j) += shift[j];
  }
  CHECK(std::abs(center_loss(f, labels, v) - center_loss(f2, labels, v2)) <= 1e-12);

  ClassGraph a = ClassGraph::restore(NormalizationMode::MinMax, 1e-6, v, 0);
  ClassGraph b = ClassGraph::restore(NormalizationMode::MinMax, 1e-6, v2, 0);
  for (std::size_t i = 0; i < a.edges().size(); ++i) {
    CHECK(std::abs(a.edges().data()[i] - b.edges().data()[i]) <= 1e-12);
  }
}

TEST_SUITE_END();
