#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

#include "specadv/common.hpp"

namespace specadv {

// Deterministic Gaussian source. std::normal_distribution is not pinned by
// the standard, so Box-Muller over mt19937_64 keeps streams reproducible
// across compilers.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    double uniform() {
        // top 53 bits -> [0,1)
        return (eng_() >> 11) * 0x1.0p-53;
    }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * kPi * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * kPi * u2);
    }

    // Complex circular Gaussian with E|z|^2 = 1 per element.
    void fill_complex_unit(Eigen::ArrayXXcd& z) {
        const double s = 1.0 / std::sqrt(2.0);
        for (Eigen::Index j = 0; j < z.cols(); ++j)
            for (Eigen::Index i = 0; i < z.rows(); ++i)
                z(i, j) = std::complex<double>(s * gaussian(), s * gaussian());
    }

    Eigen::ArrayXXd gaussian_array(Eigen::Index rows, Eigen::Index cols) {
        Eigen::ArrayXXd a(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = gaussian();
        return a;
    }

    uint64_t next_u64() { return eng_(); }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace specadv
