#pragma once

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "sspix/autograd.hpp"
#include "sspix/tensor.hpp"

namespace sspix::test {

inline Tensor rand_tensor(std::vector<int> shape, std::mt19937_64& rng, real lo = -1.0,
                          real hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<real> d(lo, hi);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::int64_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

/// Maximum relative error between reverse-mode and central-difference
/// gradients of a scalar-valued function of one tensor input.
inline real fd_max_rel_err(const std::function<Var(Var)>& f, const Tensor& x0, real h = 1e-5) {
  Var x = leaf(x0.clone(), true);
  Var y = f(x);
  backward(y);
  Tensor analytic = x->grad.defined() ? x->grad.clone() : Tensor::zeros(x0.shape());

  real worst = 0;
  NoGradGuard ng;
  for (std::int64_t i = 0; i < x0.size(); ++i) {
    Tensor xp = x0.clone();
    xp[i] += h;
    Tensor xm = x0.clone();
    xm[i] -= h;
    const real fp = scalar_value(f(leaf(std::move(xp), false)));
    const real fm = scalar_value(f(leaf(std::move(xm), false)));
    const real fd = (fp - fm) / (2 * h);
    const real err = std::abs(analytic[i] - fd);
    const real denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-4});
    worst = std::max(worst, err / denom);
  }
  return worst;
}

class TempDir {
 public:
  TempDir() {
    char tmpl[] = "/tmp/sspix_test_XXXXXX";
    path_ = mkdtemp(tmpl);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }
  std::string sub(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

}  // namespace sspix::test
