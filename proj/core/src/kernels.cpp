#include "kernels.hpp"

#include <Eigen/Core>

namespace ltx::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMat, Eigen::Unaligned, Eigen::OuterStride<>>;
using View = Eigen::Map<RowMat, Eigen::Unaligned, Eigen::OuterStride<>>;

template <typename A, typename B>
void store(View& out, const A& lhs, const B& rhs, bool accumulate)
{
    if (accumulate) {
        out.noalias() += lhs * rhs;
    } else {
        out.noalias() = lhs * rhs;
    }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double* c, std::size_t ldc, bool accumulate)
{
    const auto M = static_cast<Eigen::Index>(m);
    const auto N = static_cast<Eigen::Index>(n);
    const auto K = static_cast<Eigen::Index>(k);
    View out(c, M, N, Eigen::OuterStride<>(static_cast<Eigen::Index>(ldc)));
    const ConstView lhs(a, trans_a ? K : M, trans_a ? M : K, Eigen::OuterStride<>(static_cast<Eigen::Index>(lda)));
    const ConstView rhs(b, trans_b ? N : K, trans_b ? K : N, Eigen::OuterStride<>(static_cast<Eigen::Index>(ldb)));
    if (trans_a && trans_b) {
        store(out, lhs.transpose(), rhs.transpose(), accumulate);
    } else if (trans_a) {
        store(out, lhs.transpose(), rhs, accumulate);
    } else if (trans_b) {
        store(out, lhs, rhs.transpose(), accumulate);
    } else {
        store(out, lhs, rhs, accumulate);
    }
}

}  // namespace ltx::kernels
