#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/StdVector>

namespace rb {

using ERowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// All Eigen-mapped buffers use a fixed 64-byte alignment so vectorized loop
// peeling (and therefore floating-point summation order) never depends on
// where the allocator happened to place them. Bit-reproducibility of training
// runs relies on this.
using AVec = std::vector<double, Eigen::aligned_allocator<double>>;

// Dense row-major matrix of doubles. Owns its storage in a flat vector so it
// can be serialized directly; the affine kernels below map it into Eigen.
struct Mat {
    int rows = 0;
    int cols = 0;
    AVec a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
    double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

    // Reallocates only on shape change; contents are unspecified afterwards.
    void resize(int r, int c) {
        if (rows != r || cols != c) {
            rows = r;
            cols = c;
            a.resize(static_cast<size_t>(r) * c);
        }
    }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }

    Eigen::Map<ERowMat> map() { return {a.data(), rows, cols}; }
    Eigen::Map<const ERowMat> map() const { return {a.data(), rows, cols}; }
};

// Z = X * W + b broadcast over rows.
// X: (batch x in), W: (in x out), b: (out), Z: (batch x out).
inline void affine_forward(const Mat& x, const Mat& w, const AVec& b, Mat& z) {
    assert(x.cols == w.rows && static_cast<int>(b.size()) == w.cols);
    z.resize(x.rows, w.cols);
    z.map().noalias() = x.map() * w.map();
    z.map().rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data(), w.cols);
}

// dX = dZ * W^T.  dZ: (batch x out), W: (in x out), dX: (batch x in).
inline void affine_backward_data(const Mat& dz, const Mat& w, Mat& dx) {
    assert(dz.cols == w.cols);
    dx.resize(dz.rows, w.rows);
    dx.map().noalias() = dz.map() * w.map().transpose();
}

// gW += X^T * dZ and gb += colsum(dZ). Caller owns zeroing.
inline void affine_backward_param(const Mat& x, const Mat& dz, Mat& gw, AVec& gb) {
    assert(x.rows == dz.rows && gw.rows == x.cols && gw.cols == dz.cols);
    gw.map().noalias() += x.map().transpose() * dz.map();
    Eigen::Map<Eigen::RowVectorXd>(gb.data(), dz.cols) += dz.map().colwise().sum();
}

}  // namespace rb
