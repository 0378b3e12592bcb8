#include <cmath>

#include "gtest/gtest.h"

#include "grassbn/gradcheck.hpp"
#include "grassbn/network.hpp"
#include "test_util.hpp"

namespace grassbn {
namespace {

TEST(RelativeError, Definition) {
  EXPECT_EQ(relative_error(2.0, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1.0, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9), 1e-9 / 1e-8);
}

TEST(FdGradient, ConstantGivesZero) {
  const Vector g = fd_gradient([](const Vector&) { return 4.2; }, Vector{1, -2, 3});
  EXPECT_EQ(g, Vector(3));
}

TEST(FdGradient, HalfSquaredNormGivesIdentity) {
  Rng rng(90);
  const Vector x = gaussian_vector(rng, 12);
  const Vector g = fd_gradient([](const Vector& v) { return 0.5 * dot(v, v); }, x, 1e-6);
  EXPECT_LT(testing::max_abs_diff(g, x), 1e-9);
}

TEST(FdGradient, ErrorsOnNonFiniteObjective) {
  EXPECT_THROW(fd_gradient([](const Vector& v) { return std::log(v[0]); }, Vector{0.0}),
               NumericalError);
  EXPECT_THROW(fd_gradient([](const Vector&) { return 0.0; }, Vector{1}, 0.0), PreconditionError);
}

TEST(FdReport, TracksWorstEntryAndSerializes) {
  FdReport r = compare_gradients(Vector{1.0, 2.0, 3.0}, Vector{1.0, 2.2, 3.0}, "g");
  EXPECT_EQ(r.worst_index, "g[1]");
  EXPECT_NEAR(r.max_rel_error, 0.2 / 2.2, 1e-15);
  const auto j = r.to_json();
  EXPECT_EQ(j["entries"].size(), 3u);
  EXPECT_EQ(j["worst_index"], "g[1]");
  FdReport other;
  other.add("h", 1.0, 2.0);
  r.merge(other);
  EXPECT_EQ(r.worst_index, "h");
}

Matrix random_symmetric(Rng& rng, std::size_t n) {
  const Matrix a = gaussian_matrix(rng, n, n);
  return (a + transpose(a)) * 0.5;
}

Vector times(const Matrix& a, const Vector& y) {
  return matmul(a, Matrix(y.size(), 1, y.values())).col(0);
}

TEST(RiemannianFd, RayleighQuotient) {
  Rng rng(91);
  const Matrix a = random_symmetric(rng, 16);
  const GrassmannPoint y = testing::random_point(rng, 16);
  const FdReport r = riemannian_fd_check(
      [&](const GrassmannPoint& q) { return dot(q.vec(), times(a, q.vec())); },
      2.0 * times(a, y.vec()), y, 100, rng);
  EXPECT_EQ(r.entries.size(), 100u);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst_index;
}

TEST(RiemannianFd, SquaredProjectionVanishesAwayFromC) {
  Rng rng(92);
  const GrassmannPoint y = testing::random_point(rng, 6);
  Vector c = project_tangent(y, gaussian_vector(rng, 6)).vec();
  auto f = [&](const GrassmannPoint& q) { return dot(c, q.vec()) * dot(c, q.vec()); };
  const Vector grad = 2.0 * dot(c, y.vec()) * c;  // zero since c ⊥ y
  EXPECT_LT(norm(grad), 1e-12);
  const FdReport r = riemannian_fd_check(f, grad, y, 20, rng);
  for (const auto& e : r.entries) {
    EXPECT_LT(std::abs(e.analytic), 1e-12);
    EXPECT_LT(std::abs(e.numeric), 1e-9);
  }
}

// The loss of a Dense→BN net as a function of one weight column is invariant
// to the column's scale, so the Riemannian check applies directly.
TEST(RiemannianFd, BatchNormNetworkColumn) {
  Rng rng(93);
  Network net = make_mlp({6, {4}, 3, false});
  const Partition part = partition_parameters(net);
  initialize_parameters(net, part, rng);
  const Matrix x = gaussian_matrix(rng, 10, 6);
  const std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
  for (const ColumnRef& c : part.grassmann) {
    net.backward(softmax_ce(net.forward(x, Mode::kTrain, false), labels).grad);
    const Vector grad = net.weight_grad(c.layer).col(c.column);
    const GrassmannPoint y = GrassmannPoint::from_unit(net.weight(c.layer).col(c.column));
    auto f = [&](const GrassmannPoint& q) {
      Network probe = net;
      probe.weight(c.layer).set_col(c.column, q.vec());
      return softmax_ce(probe.forward(x, Mode::kTrain, false), labels).loss;
    };
    // scaling the column leaves the loss unchanged up to the BN epsilon
    Network scaled = net;
    scaled.weight(c.layer).set_col(c.column, 3.0 * y.vec());
    EXPECT_NEAR(softmax_ce(scaled.forward(x, Mode::kTrain, false), labels).loss, f(y), 1e-5);

    const FdReport r = riemannian_fd_check(f, grad, y, 10, rng);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_index;
  }
}

}  // namespace
}  // namespace grassbn
