#include "cffe/kernels.hpp"

#include <cassert>

namespace cffe::kernels {

namespace scalar {

double sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sumsq(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void shift(double c, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] += c;
}

}  // namespace scalar

namespace {

struct Dispatch {
  double (*sum)(const double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  double (*sumsq)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*shift)(double, double*, std::size_t);
  bool is_avx2;
};

Dispatch pick() {
#ifdef CFFE_KERNELS_HAVE_AVX2
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    return {avx2::sum, avx2::dot, avx2::sumsq, avx2::axpy, avx2::shift, true};
  }
#endif
  return {scalar::sum, scalar::dot, scalar::sumsq, scalar::axpy, scalar::shift,
          false};
}

const Dispatch& table() {
  static const Dispatch d = pick();
  return d;
}

}  // namespace

bool avx2_active() { return table().is_avx2; }

double sum(std::span<const double> x) { return table().sum(x.data(), x.size()); }

double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  return table().dot(x.data(), y.data(), x.size());
}

double sumsq(std::span<const double> x) {
  return table().sumsq(x.data(), x.size());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  table().axpy(a, x.data(), y.data(), x.size());
}

void shift(double c, std::span<double> x) { table().shift(c, x.data(), x.size()); }

}  // namespace cffe::kernels
