#include "uwdiff/kernels.hpp"
#include "uwdiff/kernels_ref.hpp"

namespace uwdiff::kernels {

const Table& scalar_table() {
    static const Table t = {
        "scalar",
        &ref::gemm_nn<float>,
        &ref::gemm_nt<float>,
        &ref::gemm_tn<float>,
        &ref::axpy<float>,
        &ref::scale<float>,
        &ref::adds<float>,
        &ref::vadd<float>,
        &ref::vsub<float>,
        &ref::vmul<float>,
        &ref::vexp<float>,
        &ref::silu<float>,
        &ref::silu_grad<float>,
        &ref::dot<float>,
        &ref::sum<float>,
        &ref::sumsq<float>,
        &ref::maxv<float>,
    };
    return t;
}

}  // namespace uwdiff::kernels
