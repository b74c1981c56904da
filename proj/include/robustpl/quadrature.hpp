// SPDX-License-Identifier: Apache-2.0
//
// robustpl: outage-constrained robust power loading for the MU-MISO downlink
// ------------------------------------------------------------------------
//
// Globally adaptive Gauss-Kronrod integration with an absolute tolerance.
// The node/weight tables come from Boost.Math; the subdivision strategy is
// a priority queue on the per-interval |Kronrod - Gauss| estimate.

#ifndef ROBUSTPL_QUADRATURE_HPP
#define ROBUSTPL_QUADRATURE_HPP

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

namespace robustpl::detail
{

struct GkSegment
{
    double a, b;
    double value;
    double error;

    bool operator<(const GkSegment &o) const { return error < o.error; }
};

// One (2G+1)-point Kronrod rule with its embedded G-point Gauss rule on [a, b].
template <unsigned N, class F>
GkSegment gk_rule(F &f, double a, double b)
{
    using kronrod = boost::math::quadrature::gauss_kronrod<double, N>;
    using gauss = boost::math::quadrature::gauss<double, (N - 1) / 2>;
    const auto &x = kronrod::abscissa();
    const auto &wk = kronrod::weights();
    const auto &wg = gauss::weights();
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);

    const double f0 = f(mid);
    double kr = f0 * wk[0];
    double ga = 0.0;
    unsigned gauss_start = 2, kronrod_start = 1;
    if ((N - 1) / 2 & 1)
        ga = f0 * wg[0];
    else
    {
        gauss_start = 1;
        kronrod_start = 2;
    }
    for (unsigned i = gauss_start; i < x.size(); i += 2)
    {
        const double s = f(mid + half * x[i]) + f(mid - half * x[i]);
        kr += s * wk[i];
        ga += s * wg[i / 2];
    }
    for (unsigned i = kronrod_start; i < x.size(); i += 2)
        kr += (f(mid + half * x[i]) + f(mid - half * x[i])) * wk[i];

    const double value = half * kr;
    const double err = std::max(std::abs(half * (kr - ga)), 4.0 * std::numeric_limits<double>::epsilon() * std::abs(value));
    return {a, b, value, err};
}

struct AdaptiveResult
{
    double value = 0.0;
    double error = 0.0;
    int evaluations = 0;
    bool converged = false;
};

// Integrates f over the union of consecutive [edges[i], edges[i+1]] until the
// summed error estimate is at most abs_tol or the interval budget is spent.
template <class F>
AdaptiveResult integrate_adaptive(F &&f, const std::vector<double> &edges, double abs_tol, int max_intervals = 4000)
{
    constexpr unsigned rule = 21;
    std::priority_queue<GkSegment> heap;
    AdaptiveResult res;
    double total_err = 0.0;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    {
        GkSegment s = gk_rule<rule>(f, edges[i], edges[i + 1]);
        res.evaluations += rule;
        total_err += s.error;
        heap.push(s);
    }
    int intervals = static_cast<int>(heap.size());
    while (total_err > abs_tol && intervals < max_intervals)
    {
        GkSegment worst = heap.top();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b))
            break; // interval no longer divisible in double precision
        heap.pop();
        GkSegment left = gk_rule<rule>(f, worst.a, mid);
        GkSegment right = gk_rule<rule>(f, mid, worst.b);
        res.evaluations += 2 * rule;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        ++intervals;
    }
    // Re-sum from scratch; the running total accumulates cancellation error.
    double value = 0.0, err = 0.0;
    while (!heap.empty())
    {
        value += heap.top().value;
        err += heap.top().error;
        heap.pop();
    }
    res.value = value;
    res.error = err;
    res.converged = err <= abs_tol;
    return res;
}

} // namespace robustpl::detail

#endif
