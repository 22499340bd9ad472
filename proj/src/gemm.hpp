#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

namespace dmads::detail {

// 64-byte SIMD register as a GCC vector extension; lowered to whatever the
// target ISA offers (one zmm with AVX-512, two ymm with AVX2, ...).
template <typename T>
struct Simd {
    static constexpr std::size_t width = 64 / sizeof(T);
    typedef T type __attribute__((vector_size(64)));
};

// MR x (NV * width) register tile: C_tile (+)= A_panel * B_panel over kc.
// A(m, k) = a[m * a_row + k * a_col]; B rows are contiguous with stride ldb.
template <typename T, int MR, int NV>
inline void micro_tile(std::size_t kc, const T* a, std::size_t a_row, std::size_t a_col, const T* b, std::size_t ldb,
                       T* c, std::size_t ldc, bool load_c) {
    using V = typename Simd<T>::type;
    constexpr std::size_t W = Simd<T>::width;
    V acc[MR][NV];
    for (int i = 0; i < MR; ++i) {
        for (int j = 0; j < NV; ++j) {
            if (load_c) {
                std::memcpy(&acc[i][j], c + i * ldc + j * W, sizeof(V));
            } else {
                acc[i][j] = V{};
            }
        }
    }
    for (std::size_t k = 0; k < kc; ++k) {
        V bv[NV];
        for (int j = 0; j < NV; ++j) std::memcpy(&bv[j], b + k * ldb + j * W, sizeof(V));
        for (int i = 0; i < MR; ++i) {
            const T av = a[i * a_row + k * a_col];
            for (int j = 0; j < NV; ++j) acc[i][j] += av * bv[j];
        }
    }
    for (int i = 0; i < MR; ++i) {
        for (int j = 0; j < NV; ++j) std::memcpy(c + i * ldc + j * W, &acc[i][j], sizeof(V));
    }
}

template <typename T, int NV>
inline void row_block(std::size_t rows, std::size_t kc, const T* a, std::size_t a_row, std::size_t a_col, const T* b,
                      std::size_t ldb, T* c, std::size_t ldc, bool load_c) {
    switch (rows) {
        case 8: micro_tile<T, 8, NV>(kc, a, a_row, a_col, b, ldb, c, ldc, load_c); break;
        case 7: micro_tile<T, 7, NV>(kc, a, a_row, a_col, b, ldb, c, ldc, load_c); break;
        case 6: micro_tile<T, 6, NV>(kc, a, a_row, a_col, b, ldb, c, ldc, load_c); break;
        case 5: micro_tile<T, 5, NV>(kc, a, a_row, a_col, b, ldb, c, ldc, load_c); break;
        case 4: micro_tile<T, 4, NV>(kc, a, a_row, a_col, b, ldb, c, ldc, load_c); break;
        case 3: micro_tile<T, 3, NV>(kc, a, a_row, a_col, b, ldb, c, ldc, load_c); break;
        case 2: micro_tile<T, 2, NV>(kc, a, a_row, a_col, b, ldb, c, ldc, load_c); break;
        default: micro_tile<T, 1, NV>(kc, a, a_row, a_col, b, ldb, c, ldc, load_c); break;
    }
}

// C[M x N] = A[M x K] * B[K x N] (+ C when accumulate). A is addressed through
// strides so a transposed operand needs no copy; B and C are row-major. B is
// packed per K-block into zero-padded column panels so the micro-kernel reads
// it contiguously. Summation order depends only on the shapes, so results are
// bitwise reproducible.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t a_row, std::size_t a_col, const T* b,
          std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
    constexpr std::size_t NR = 3 * Simd<T>::width;
    constexpr std::size_t KC = 256;
    constexpr std::size_t MR = 8;
    if (m == 0 || n == 0) return;
    if (k == 0) {
        if (!accumulate) {
            for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T(0));
        }
        return;
    }
    const std::size_t panels = (n + NR - 1) / NR;
    std::vector<T> packed(panels * std::min(KC, k) * NR);
    alignas(64) T edge[MR * NR];
    for (std::size_t k0 = 0; k0 < k; k0 += KC) {
        const std::size_t kc = std::min(KC, k - k0);
        const bool load_c = accumulate || k0 > 0;
        const T* ak = a + k0 * a_col;
        for (std::size_t kk = 0; kk < kc; ++kk) {
            const T* row = b + (k0 + kk) * ldb;
            for (std::size_t p = 0; p < panels; ++p) {
                T* dst = packed.data() + (p * kc + kk) * NR;
                const std::size_t n0 = p * NR;
                const std::size_t len = std::min(NR, n - n0);
                std::copy(row + n0, row + n0 + len, dst);
                std::fill(dst + len, dst + NR, T(0));
            }
        }
        for (std::size_t p = 0; p < panels; ++p) {
            const std::size_t n0 = p * NR;
            const std::size_t len = std::min(NR, n - n0);
            const T* panel = packed.data() + p * kc * NR;
            for (std::size_t m0 = 0; m0 < m; m0 += MR) {
                const std::size_t rows = std::min(MR, m - m0);
                T* ct = c + m0 * ldc + n0;
                if (len == NR) {
                    row_block<T, 3>(rows, kc, ak + m0 * a_row, a_row, a_col, panel, NR, ct, ldc, load_c);
                    continue;
                }
                for (std::size_t i = 0; i < rows; ++i) {
                    std::fill(edge + i * NR, edge + (i + 1) * NR, T(0));
                    if (load_c) std::copy(ct + i * ldc, ct + i * ldc + len, edge + i * NR);
                }
                row_block<T, 3>(rows, kc, ak + m0 * a_row, a_row, a_col, panel, NR, edge, NR, true);
                for (std::size_t i = 0; i < rows; ++i) std::copy(edge + i * NR, edge + i * NR + len, ct + i * ldc);
            }
        }
    }
}

}  // namespace dmads::detail
