#include <cstdlib>
#include <cstring>

#include "uwdiff/kernels.hpp"

namespace uwdiff::kernels {

const Table& scalar_table();
#if UWDIFF_HAVE_AVX2
const Table& avx2_table();
#endif

bool avx2_supported() {
#if UWDIFF_HAVE_AVX2
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Table* table_for(Backend b) {
    switch (b) {
        case Backend::Scalar:
            return &scalar_table();
        case Backend::Avx2:
#if UWDIFF_HAVE_AVX2
            if (avx2_supported()) return &avx2_table();
#endif
            return nullptr;
    }
    return nullptr;
}

namespace {

struct Active {
    const Table* table;
    Backend backend;
};

Active pick_initial() {
    Backend want = avx2_supported() ? Backend::Avx2 : Backend::Scalar;
    if (const char* env = std::getenv("UWDIFF_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) want = Backend::Scalar;
        else if (std::strcmp(env, "avx2") == 0) want = Backend::Avx2;
        // anything else (including "auto") keeps the detected default
    }
    const Table* t = table_for(want);
    if (!t) {
        want = Backend::Scalar;
        t = table_for(want);
    }
    return {t, want};
}

Active& active_state() {
    static Active a = pick_initial();
    return a;
}

}  // namespace

const Table& active() { return *active_state().table; }

Backend active_backend() { return active_state().backend; }

bool set_backend(Backend b) {
    const Table* t = table_for(b);
    if (!t) return false;
    active_state() = {t, b};
    return true;
}

}  // namespace uwdiff::kernels
