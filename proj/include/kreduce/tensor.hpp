#pragma once

// Dense rank-3 and rank-4 tensors over small dimensions (real manifold
// dimension here is at most 8). Flat row-major storage, bounds left to the
// caller. Eigen covers rank 1 and 2.

#include <Eigen/Dense>
#include <vector>

namespace kreduce {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

class Tensor3 {
  public:
    Tensor3() = default;
    explicit Tensor3(int n) : n_(n), a_(size_t(n) * n * n, 0.0) {}

    int dim() const { return n_; }
    double& operator()(int i, int j, int k) { return a_[size_t((i * n_ + j) * n_ + k)]; }
    double operator()(int i, int j, int k) const { return a_[size_t((i * n_ + j) * n_ + k)]; }

    double max_abs() const {
        double m = 0.0;
        for (double x : a_) m = std::max(m, std::abs(x));
        return m;
    }

  private:
    int n_ = 0;
    std::vector<double> a_;
};

class Tensor4 {
  public:
    Tensor4() = default;
    explicit Tensor4(int n) : n_(n), a_(size_t(n) * n * n * n, 0.0) {}

    int dim() const { return n_; }
    double& operator()(int i, int j, int k, int l) {
        return a_[size_t(((i * n_ + j) * n_ + k) * n_ + l)];
    }
    double operator()(int i, int j, int k, int l) const {
        return a_[size_t(((i * n_ + j) * n_ + k) * n_ + l)];
    }

    double max_abs() const {
        double m = 0.0;
        for (double x : a_) m = std::max(m, std::abs(x));
        return m;
    }

  private:
    int n_ = 0;
    std::vector<double> a_;
};

} // namespace kreduce
