#include "its/spectrum.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include <fftw3.h>

namespace its {

namespace {

// fftw planning is not thread-safe; execution of an existing plan on
// caller-owned buffers is.
class PlanCache {
public:
    ~PlanCache() {
        for (auto& [n, plan] : plans_) {
            fftw_destroy_plan(plan);
        }
    }

    fftw_plan get(int n) {
        std::lock_guard lock(mutex_);
        if (auto it = plans_.find(n); it != plans_.end()) {
            return it->second;
        }
        double* in = fftw_alloc_real(n);
        fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
        fftw_plan plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
        fftw_free(in);
        fftw_free(out);
        plans_.emplace(n, plan);
        return plan;
    }

private:
    std::mutex mutex_;
    std::map<int, fftw_plan> plans_;
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

struct FftwDeleter {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

}  // namespace

Eigen::VectorXd magnitude_spectrum(std::span<const double> signal) {
    const int n = static_cast<int>(signal.size());
    if (n == 0) {
        return {};
    }
    const int bins = n / 2 + 1;
    std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(n));
    std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(bins));
    std::copy(signal.begin(), signal.end(), in.get());
    fftw_execute_dft_r2c(plan_cache().get(n), in.get(), out.get());
    Eigen::VectorXd mag(bins);
    for (int k = 0; k < bins; ++k) {
        mag[k] = std::hypot(out.get()[k][0], out.get()[k][1]);
    }
    return mag;
}

}  // namespace its
