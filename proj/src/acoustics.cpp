#include "auvtrack/acoustics.hpp"

#include "auvtrack/errors.hpp"

#include <cmath>
#include <string>

namespace auvtrack {

void HydroParams::validate() const {
    if (!std::isfinite(sl) || !std::isfinite(ts) || !std::isfinite(di) || !std::isfinite(nl) ||
        std::isnan(dt_thresh) || !(f > 0.0)) {
        throw ConfigError("hydro: levels must be finite and f > 0");
    }
}

double thorp_alpha(double f) {
    if (!(f > 0.0)) {
        throw DomainError("thorp_alpha: frequency must be positive, got " + std::to_string(f));
    }
    const double f2 = f * f;
    return 0.11 * f2 / (1.0 + f2) + 44.0 * f2 / (4100.0 + f2) + 2.75e-4 * f2 + 0.003;
}

double transmission_loss(double d, double f) {
    if (!(d > 0.0)) {
        throw DomainError("transmission_loss: range must be positive, got " + std::to_string(d));
    }
    return 20.0 * std::log10(d) + d * thorp_alpha(f) * 1e-3;
}

double active_echo_margin(double d, const HydroParams& hp) {
    return hp.sl - 2.0 * transmission_loss(d, hp.f) + hp.ts - (hp.nl - hp.di) - hp.dt_thresh;
}

double passive_snr(double d, const HydroParams& hp) { return hp.sl - transmission_loss(d, hp.f) - hp.nl + hp.di; }

double detection_radius(const HydroParams& hp) {
    double lo = 1e-6;
    if (!(active_echo_margin(lo, hp) >= 0.0)) {
        throw DomainError("detection_radius: echo margin is negative at every range");
    }
    // EM falls monotonically; grow the bracket until it turns negative.
    double hi = 1.0;
    while (active_echo_margin(hi, hp) >= 0.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e9) {
            throw DomainError("detection_radius: no finite radius");
        }
    }
    while (hi - lo > 1e-4) {
        const double mid = 0.5 * (lo + hi);
        (active_echo_margin(mid, hp) >= 0.0 ? lo : hi) = mid;
    }
    return lo;
}

}  // namespace auvtrack
