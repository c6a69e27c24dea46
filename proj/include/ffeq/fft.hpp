#pragma once

#include <complex>
#include <cstddef>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

#include "ffeq/error.hpp"

namespace ffeq::fft {

namespace detail {

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

template <class T>
using AlignedBuffer = std::unique_ptr<T[], FftwFree>;

template <class T>
AlignedBuffer<T> allocate(std::size_t n)
{
    auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * (n == 0 ? 1 : n)));
    if (!p)
        throw std::bad_alloc();
    return AlignedBuffer<T>(p);
}

struct PlanDeleter {
    void operator()(fftw_plan_s* p) const noexcept { fftw_destroy_plan(p); }
};
using Plan = std::unique_ptr<fftw_plan_s, PlanDeleter>;

// FFTW's planner is not reentrant; execution of an existing plan is. Plans are
// created once per (size, direction) and reused on fftw_malloc'd buffers, which
// keeps results bit-identical across calls.
struct PlanCache {
    std::mutex mutex;
    std::map<std::size_t, Plan> forward;
    std::map<std::size_t, Plan> inverse;
};

inline PlanCache& plan_cache()
{
    static PlanCache cache;
    return cache;
}

inline fftw_plan forward_plan(std::size_t n)
{
    auto& cache = plan_cache();
    std::lock_guard lock(cache.mutex);
    auto& slot = cache.forward[n];
    if (!slot) {
        auto in = allocate<double>(n);
        auto out = allocate<fftw_complex>(n / 2 + 1);
        slot.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE));
    }
    return slot.get();
}

inline fftw_plan inverse_plan(std::size_t n)
{
    auto& cache = plan_cache();
    std::lock_guard lock(cache.mutex);
    auto& slot = cache.inverse[n];
    if (!slot) {
        auto in = allocate<fftw_complex>(n / 2 + 1);
        auto out = allocate<double>(n);
        slot.reset(fftw_plan_dft_c2r_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE));
    }
    return slot.get();
}

} // namespace detail

/// Forward real transform: returns the n/2+1 non-negative-frequency bins of
/// sum_k x[k] exp(-j 2 pi k m / n).
inline std::vector<std::complex<double>> rfft(std::span<const double> x)
{
    const std::size_t n = x.size();
    if (n == 0)
        throw Error(ErrorCode::EmptyInput, "transform of empty sequence");
    auto in = detail::allocate<double>(n);
    auto out = detail::allocate<fftw_complex>(n / 2 + 1);
    std::memcpy(in.get(), x.data(), n * sizeof(double));
    fftw_execute_dft_r2c(detail::forward_plan(n), in.get(), out.get());
    std::vector<std::complex<double>> result(n / 2 + 1);
    for (std::size_t k = 0; k < result.size(); ++k)
        result[k] = {out[k][0], out[k][1]};
    return result;
}

/// Inverse of rfft for a length-n real sequence whose spectrum is Hermitian;
/// the imaginary parts of the DC and (even n) Nyquist bins are ignored.
/// Includes the 1/n normalization.
inline std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n)
{
    if (spectrum.size() != n / 2 + 1)
        throw Error(ErrorCode::Shape, "half spectrum must hold n/2+1 bins");
    auto in = detail::allocate<fftw_complex>(n / 2 + 1);
    auto out = detail::allocate<double>(n);
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
        in[k][0] = spectrum[k].real();
        in[k][1] = spectrum[k].imag();
    }
    fftw_execute_dft_c2r(detail::inverse_plan(n), in.get(), out.get());
    std::vector<double> result(out.get(), out.get() + n);
    const double scale = 1.0 / static_cast<double>(n);
    for (double& v : result)
        v *= scale;
    return result;
}

/// Smallest size >= n of the form 2^a 3^b 5^c, which FFTW handles efficiently.
inline std::size_t good_size(std::size_t n)
{
    if (n <= 1)
        return 1;
    for (std::size_t m = n;; ++m) {
        std::size_t r = m;
        for (std::size_t p : {2u, 3u, 5u})
            while (r % p == 0)
                r /= p;
        if (r == 1)
            return m;
    }
}

} // namespace ffeq::fft
