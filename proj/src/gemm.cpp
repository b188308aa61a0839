#include "gemm.hpp"

#include <algorithm>
#include <cstring>

#include "deepclass/parallel.hpp"

namespace deepclass::detail {

namespace {

typedef double v8d __attribute__((vector_size(64)));

constexpr std::size_t kPanel = 32;  // columns per micro-tile (4 vectors)
constexpr std::size_t kRows = 6;
constexpr std::size_t kDepth = 256;  // k-block kept hot in L2

inline v8d load(const double* p) {
    v8d v;
    std::memcpy(&v, p, sizeof(v));
    return v;
}

inline void store(double* p, v8d v) { std::memcpy(p, &v, sizeof(v)); }

// A has row stride lda, B and C row stride N; kd products per element.
template <std::size_t R>
void micro_tile(std::size_t N, std::size_t lda, std::size_t kd, const double* A, const double* B, double* C) {
    v8d acc[R][4];
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t v = 0; v < 4; ++v) acc[r][v] = load(C + r * N + v * 8);
    for (std::size_t k = 0; k < kd; ++k) {
        const double* brow = B + k * N;
        v8d b0 = load(brow), b1 = load(brow + 8), b2 = load(brow + 16), b3 = load(brow + 24);
        for (std::size_t r = 0; r < R; ++r) {
            double a = A[r * lda + k];
            acc[r][0] += a * b0;
            acc[r][1] += a * b1;
            acc[r][2] += a * b2;
            acc[r][3] += a * b3;
        }
    }
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t v = 0; v < 4; ++v) store(C + r * N + v * 8, acc[r][v]);
}

void tail_tile(std::size_t rows, std::size_t cols, std::size_t N, std::size_t lda, std::size_t kd, const double* A,
               const double* B, double* C) {
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < cols; ++j) {
            double acc = C[r * N + j];
            for (std::size_t k = 0; k < kd; ++k) acc += A[r * lda + k] * B[k * N + j];
            C[r * N + j] = acc;
        }
    }
}

void panel_range(std::size_t j_begin, std::size_t j_end, std::size_t M, std::size_t N, std::size_t K,
                 const double* A, const double* B, double* C) {
    for (std::size_t k0 = 0; k0 < K; k0 += kDepth) {
        std::size_t kd = (k0 + kDepth <= K) ? kDepth : K - k0;
        for (std::size_t j = j_begin; j < j_end; j += kPanel) {
            std::size_t cols = (j + kPanel <= j_end) ? kPanel : j_end - j;
            for (std::size_t i0 = 0; i0 < M; i0 += kRows) {
                std::size_t rows = (i0 + kRows <= M) ? kRows : M - i0;
                const double* a = A + i0 * K + k0;
                const double* b = B + k0 * N + j;
                double* c = C + i0 * N + j;
                if (cols < kPanel) {
                    tail_tile(rows, cols, N, K, kd, a, b, c);
                    continue;
                }
                switch (rows) {
                    case 6: micro_tile<6>(N, K, kd, a, b, c); break;
                    case 5: micro_tile<5>(N, K, kd, a, b, c); break;
                    case 4: micro_tile<4>(N, K, kd, a, b, c); break;
                    case 3: micro_tile<3>(N, K, kd, a, b, c); break;
                    case 2: micro_tile<2>(N, K, kd, a, b, c); break;
                    default: micro_tile<1>(N, K, kd, a, b, c); break;
                }
            }
        }
    }
}

}  // namespace

void gemm_accumulate(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B, double* C) {
    if (M == 0 || N == 0 || K == 0) return;
    std::size_t panels = (N + kPanel - 1) / kPanel;
    std::size_t min_chunk = M * N * K < (std::size_t{1} << 22) ? panels : 1;
    parallel_for(
        panels,
        [&](std::size_t p0, std::size_t p1) {
            panel_range(p0 * kPanel, std::min(N, p1 * kPanel), M, N, K, A, B, C);
        },
        min_chunk);
}

}  // namespace deepclass::detail
