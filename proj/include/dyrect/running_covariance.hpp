#pragma once

#include <cstddef>

namespace dyrect {

// Single-pass co-moment accumulator (Welford-style recursive update) for the
// population covariance of (x, y) pairs.
class RunningCovariance {
public:
    void add(double x, double y)
    {
        ++n_;
        const double dx = x - mean_x_;
        mean_x_ += dx / static_cast<double>(n_);
        mean_y_ += (y - mean_y_) / static_cast<double>(n_);
        comoment_ += dx * (y - mean_y_);
    }

    std::size_t count() const { return n_; }
    double mean_x() const { return mean_x_; }
    double mean_y() const { return mean_y_; }

    // Divides by N; 0 for fewer than two samples.
    double covariance() const
    {
        return n_ < 2 ? 0.0 : comoment_ / static_cast<double>(n_);
    }

private:
    std::size_t n_ = 0;
    double mean_x_ = 0.0;
    double mean_y_ = 0.0;
    double comoment_ = 0.0;
};

} // namespace dyrect
