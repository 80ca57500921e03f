#pragma once

#include <cassert>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace uqkit {

using Vec = std::vector<double>;

// Minimal dense row-major matrix. Sized for desk-scale experiments; all the
// training code below works through this type so the arithmetic is fully
// deterministic and auditable.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative shape");
    }

    double& operator()(int r, int c) {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return a[static_cast<size_t>(r) * cols + c];
    }
    double operator()(int r, int c) const {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return a[static_cast<size_t>(r) * cols + c];
    }

    Vec row(int r) const {
        Vec v(cols);
        for (int c = 0; c < cols; ++c) v[c] = (*this)(r, c);
        return v;
    }
    void set_row(int r, const Vec& v) {
        assert(static_cast<int>(v.size()) == cols);
        for (int c = 0; c < cols; ++c) (*this)(r, c) = v[c];
    }
    bool empty() const { return rows == 0 || cols == 0; }
};

inline Mat matmul(const Mat& A, const Mat& B) {
    if (A.cols != B.rows) throw std::invalid_argument("matmul: shape mismatch");
    Mat C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int k = 0; k < A.cols; ++k) {
            double aik = A(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < B.cols; ++j) C(i, j) += aik * B(k, j);
        }
    return C;
}

// A^T * B
inline Mat matmul_tn(const Mat& A, const Mat& B) {
    if (A.rows != B.rows) throw std::invalid_argument("matmul_tn: shape mismatch");
    Mat C(A.cols, B.cols);
    for (int k = 0; k < A.rows; ++k)
        for (int i = 0; i < A.cols; ++i) {
            double aki = A(k, i);
            if (aki == 0.0) continue;
            for (int j = 0; j < B.cols; ++j) C(i, j) += aki * B(k, j);
        }
    return C;
}

// A * B^T
inline Mat matmul_nt(const Mat& A, const Mat& B) {
    if (A.cols != B.cols) throw std::invalid_argument("matmul_nt: shape mismatch");
    Mat C(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < B.rows; ++j) {
            double s = 0.0;
            for (int k = 0; k < A.cols; ++k) s += A(i, k) * B(j, k);
            C(i, j) = s;
        }
    return C;
}

inline void add_row_broadcast(Mat& A, const Vec& b) {
    if (static_cast<int>(b.size()) != A.cols) throw std::invalid_argument("add_row_broadcast: shape mismatch");
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) A(i, j) += b[j];
}

inline void axpy(Mat& Y, double alpha, const Mat& X) {
    if (Y.rows != X.rows || Y.cols != X.cols) throw std::invalid_argument("axpy: shape mismatch");
    for (size_t i = 0; i < Y.a.size(); ++i) Y.a[i] += alpha * X.a[i];
}

inline void axpy(Vec& y, double alpha, const Vec& x) {
    if (y.size() != x.size()) throw std::invalid_argument("axpy: size mismatch");
    for (size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(Mat& A, double s) {
    for (double& v : A.a) v *= s;
}
inline void scale(Vec& v, double s) {
    for (double& x : v) x *= s;
}

inline double dot(const Vec& x, const Vec& y) {
    if (x.size() != y.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double squared_norm(const Vec& x) { return dot(x, x); }

inline double sum(const Vec& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
}

inline int argmax(const Vec& x) {
    if (x.empty()) throw std::invalid_argument("argmax: empty vector");
    int best = 0;
    for (int i = 1; i < static_cast<int>(x.size()); ++i)
        if (x[i] > x[best]) best = i;
    return best;
}

}  // namespace uqkit
