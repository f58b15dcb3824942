#include <omp.h>

#include <random>

#include <gtest/gtest.h>

#include "surgseg/kernels.hpp"

namespace surgseg {
namespace {

template <typename Real>
Tensor4<Real> random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor4<Real> t(n, c, h, w);
  for (auto& v : t.data) v = static_cast<Real>(d(rng));
  return t;
}

template <typename Real>
std::vector<Real> random_vector(std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<Real> v(size);
  for (auto& x : v) x = static_cast<Real>(d(rng));
  return v;
}

template <typename Real>
void expect_close(const std::vector<Real>& a, const std::vector<Real>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "index " << i;
}

struct ConvCase {
  int n, cin, cout, h, w, k;
};

void PrintTo(const ConvCase& c, std::ostream* os) {
  *os << c.n << "x" << c.cin << "x" << c.h << "x" << c.w << "->" << c.cout << "/k" << c.k;
}

class ConvAgainstReference : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvAgainstReference, ForwardAndBackwardMatch) {
  const ConvCase c = GetParam();
  const auto in = random_tensor<double>(c.n, c.cin, c.h, c.w, 1);
  const auto weight = random_vector<double>(static_cast<std::size_t>(c.cout) * c.cin * c.k * c.k, 2);
  const auto bias = random_vector<double>(c.cout, 3);
  Tensor4<double> fast, slow;
  kernels::conv2d_forward<double>(in, weight, bias, c.cout, c.k, fast);
  kernels::reference::conv2d_forward<double>(in, weight, bias, c.cout, c.k, slow);
  expect_close(fast.data, slow.data, 1e-10);

  const auto grad_out = random_tensor<double>(c.n, c.cout, c.h, c.w, 4);
  Tensor4<double> gi_fast, gi_slow;
  kernels::conv2d_backward_input<double>(grad_out, weight, c.cin, c.k, gi_fast);
  kernels::reference::conv2d_backward_input<double>(grad_out, weight, c.cin, c.k, gi_slow);
  expect_close(gi_fast.data, gi_slow.data, 1e-10);

  std::vector<double> gw_fast(weight.size(), 0.5), gb_fast(bias.size(), 0.5);
  std::vector<double> gw_slow(weight.size(), 0.5), gb_slow(bias.size(), 0.5);
  kernels::conv2d_backward_params<double>(in, grad_out, c.k, gw_fast, gb_fast);
  kernels::reference::conv2d_backward_params<double>(in, grad_out, c.k, gw_slow, gb_slow);
  expect_close(gw_fast, gw_slow, 1e-9);
  expect_close(gb_fast, gb_slow, 1e-9);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvAgainstReference,
                         ::testing::Values(ConvCase{1, 1, 1, 1, 1, 3}, ConvCase{2, 3, 4, 5, 7, 3},
                                           ConvCase{3, 5, 2, 8, 8, 3}, ConvCase{2, 4, 6, 6, 3, 1},
                                           ConvCase{1, 2, 3, 2, 9, 3}),
                         [](const ::testing::TestParamInfo<ConvCase>& info) {
                           const ConvCase& c = info.param;
                           return "n" + std::to_string(c.n) + "_c" + std::to_string(c.cin) + "to" +
                                  std::to_string(c.cout) + "_" + std::to_string(c.h) + "x" + std::to_string(c.w) +
                                  "_k" + std::to_string(c.k);
                         });

TEST(Kernels, ResultsIndependentOfThreadCount) {
  const auto in = random_tensor<float>(4, 6, 16, 16, 9);
  const auto weight = random_vector<float>(8 * 6 * 9, 10);
  const auto grad_out = random_tensor<float>(4, 8, 16, 16, 11);
  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    Tensor4<float> out, gi;
    std::vector<float> gw(weight.size(), 0.0f), gb(8, 0.0f);
    kernels::conv2d_forward<float>(in, weight, {}, 8, 3, out);
    kernels::conv2d_backward_input<float>(grad_out, weight, 6, 3, gi);
    kernels::conv2d_backward_params<float>(in, grad_out, 3, gw, gb);
    return std::make_tuple(out.data, gi.data, gw, gb);
  };
  const int saved = omp_get_max_threads();
  const auto one = run(1);
  const auto many = run(4);
  omp_set_num_threads(saved);
  EXPECT_EQ(one, many);
}

TEST(Kernels, MaxPoolMatchesReferenceAndRoutesGradient) {
  const auto in = random_tensor<double>(2, 3, 6, 8, 12);
  Tensor4<double> fast, slow;
  std::vector<int> arg_fast, arg_slow;
  kernels::maxpool2_forward<double>(in, fast, arg_fast);
  kernels::reference::maxpool2_forward<double>(in, slow, arg_slow);
  EXPECT_EQ(fast.data, slow.data);
  EXPECT_EQ(arg_fast, arg_slow);

  Tensor4<double> grad_out(2, 3, 3, 4, 1.0), grad_in;
  kernels::maxpool2_backward<double>(grad_out, arg_fast, grad_in);
  double total = 0;
  for (double v : grad_in.data) total += v;
  EXPECT_EQ(total, 2.0 * 3 * 3 * 4);
}

TEST(Kernels, UpsampleIsAdjointOfItsBackward) {
  const auto x = random_tensor<double>(2, 3, 4, 5, 13);
  const auto y = random_tensor<double>(2, 3, 8, 10, 14);
  Tensor4<double> up, slow, down;
  kernels::upsample2_forward<double>(x, up);
  kernels::reference::upsample2_forward<double>(x, slow);
  EXPECT_EQ(up.data, slow.data);
  kernels::upsample2_backward<double>(y, down);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < up.data.size(); ++i) lhs += up.data[i] * y.data[i];
  for (std::size_t i = 0; i < x.data.size(); ++i) rhs += x.data[i] * down.data[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Kernels, SoftmaxNormalizesAndMatchesReference) {
  auto logits = random_tensor<float>(3, 7, 5, 5, 15);
  for (auto& v : logits.data) v *= 30.0f;  // exercise the max shift
  Tensor4<float> fast, slow;
  kernels::softmax_forward<float>(logits, fast);
  kernels::reference::softmax_forward<float>(logits, slow);
  expect_close(fast.data, slow.data, 1e-6);
  const std::size_t plane = 25;
  for (int n = 0; n < 3; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      double sum = 0;
      for (int c = 0; c < 7; ++c) sum += fast.data[(static_cast<std::size_t>(n) * 7 + c) * plane + p];
      EXPECT_NEAR(sum, 1.0, 1e-5);
    }
  }
}

TEST(Kernels, SoftmaxBackwardMatchesFiniteDifference) {
  const auto logits = random_tensor<double>(1, 4, 2, 3, 16);
  const auto upstream = random_tensor<double>(1, 4, 2, 3, 17);
  auto objective = [&](const Tensor4<double>& z) {
    Tensor4<double> p;
    kernels::softmax_forward<double>(z, p);
    double s = 0;
    for (std::size_t i = 0; i < p.data.size(); ++i) s += p.data[i] * upstream.data[i];
    return s;
  };
  Tensor4<double> probs, grad;
  kernels::softmax_forward<double>(logits, probs);
  kernels::softmax_backward<double>(probs, upstream, grad);
  for (std::size_t i = 0; i < logits.data.size(); ++i) {
    auto plus = logits, minus = logits;
    plus.data[i] += 1e-6;
    minus.data[i] -= 1e-6;
    EXPECT_NEAR(grad.data[i], (objective(plus) - objective(minus)) / 2e-6, 1e-8);
  }
}

TEST(Kernels, BatchNormBackwardMatchesFiniteDifference) {
  const auto x = random_tensor<double>(3, 2, 3, 3, 18);
  const auto upstream = random_tensor<double>(3, 2, 3, 3, 19);
  const std::vector<double> gamma{1.3, 0.7}, beta{0.1, -0.2};
  auto objective = [&](const Tensor4<double>& in, const std::vector<double>& g) {
    std::vector<double> rm(2, 0.0), rv(2, 1.0);
    Tensor4<double> out;
    kernels::BatchNormCache<double> cache;
    kernels::batchnorm_forward_train<double>(in, g, beta, 1e-5, 0.1, rm, rv, out, cache);
    double s = 0;
    for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * upstream.data[i];
    return s;
  };
  std::vector<double> rm(2, 0.0), rv(2, 1.0);
  Tensor4<double> out, grad_in;
  kernels::BatchNormCache<double> cache;
  kernels::batchnorm_forward_train<double>(x, gamma, beta, 1e-5, 0.1, rm, rv, out, cache);
  std::vector<double> gg(2, 0.0), gb(2, 0.0);
  kernels::batchnorm_backward<double>(upstream, gamma, cache, grad_in, gg, gb);
  for (std::size_t i = 0; i < x.data.size(); i += 5) {
    auto plus = x, minus = x;
    plus.data[i] += 1e-6;
    minus.data[i] -= 1e-6;
    EXPECT_NEAR(grad_in.data[i], (objective(plus, gamma) - objective(minus, gamma)) / 2e-6, 1e-6);
  }
  for (int c = 0; c < 2; ++c) {
    auto gp = gamma, gm = gamma;
    gp[c] += 1e-6;
    gm[c] -= 1e-6;
    EXPECT_NEAR(gg[c], (objective(x, gp) - objective(x, gm)) / 2e-6, 1e-6);
  }
  // Running statistics move a tenth of the way toward the batch values.
  double mean0 = 0;
  for (int n = 0; n < 3; ++n) {
    for (int p = 0; p < 9; ++p) mean0 += x.data[(n * 2) * 9 + p];
  }
  EXPECT_NEAR(rm[0], 0.1 * mean0 / 27.0, 1e-12);
}

TEST(Kernels, RejectsMismatchedWeights) {
  Tensor4<float> in(1, 2, 4, 4), out;
  std::vector<float> w(10);
  EXPECT_THROW(kernels::conv2d_forward<float>(in, w, {}, 3, 3, out), std::logic_error);
}

}  // namespace
}  // namespace surgseg
