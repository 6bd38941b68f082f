#pragma once

#include <cstddef>
#include <vector>

namespace manifold {

/// One stochastic Heun step for dy = f(y) dt + G(y) o dW with scalar noise
/// (Stratonovich). `f(y, out)` and `G(y, out)` write into pre-sized buffers.
/// Scratch vectors are reused across calls.
struct HeunWorkspace {
    std::vector<double> f0, g0, f1, g1, pred;
    void resize(std::size_t n) {
        f0.resize(n);
        g0.resize(n);
        f1.resize(n);
        g1.resize(n);
        pred.resize(n);
    }
};

template <class Drift, class Diffusion>
void heun_step(std::vector<double>& y, double dt, double dW, Drift&& f, Diffusion&& G,
               HeunWorkspace& ws) {
    const std::size_t n = y.size();
    ws.resize(n);
    f(y, ws.f0);
    G(y, ws.g0);
    for (std::size_t i = 0; i < n; ++i) ws.pred[i] = y[i] + ws.f0[i] * dt + ws.g0[i] * dW;
    f(ws.pred, ws.f1);
    G(ws.pred, ws.g1);
    for (std::size_t i = 0; i < n; ++i)
        y[i] += 0.5 * (ws.f0[i] + ws.f1[i]) * dt + 0.5 * (ws.g0[i] + ws.g1[i]) * dW;
}

}  // namespace manifold
