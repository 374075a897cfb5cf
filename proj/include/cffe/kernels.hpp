#pragma once

#include <cstddef>
#include <span>

// Reduction kernels used by the forest and variance code paths. Every
// operation has a scalar reference implementation (the correctness oracle)
// and, on x86-64, an AVX2 variant. Dispatch happens once per process based on
// what the CPU supports, so a given build/host pair always runs the same code
// path regardless of thread count.
namespace cffe::kernels {

namespace scalar {
double sum(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double sumsq(const double* x, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void shift(double c, double* x, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define CFFE_KERNELS_HAVE_AVX2 1
namespace avx2 {
double sum(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double sumsq(const double* x, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void shift(double c, double* x, std::size_t n);
}  // namespace avx2
#endif

// True when the process-wide dispatch picked the AVX2 variants.
bool avx2_active();

double sum(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);
double sumsq(std::span<const double> x);
// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);
// x[i] += c
void shift(double c, std::span<double> x);

}  // namespace cffe::kernels
