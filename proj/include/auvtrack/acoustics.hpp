#pragma once

namespace auvtrack {

/// Sonar-equation levels, all in dB; f in kHz.
struct HydroParams {
    double sl = 100.0;  // source level
    double ts = 3.0;    // target strength
    double di = 3.0;    // directivity index
    double dt_thresh = 20.0;
    double nl = 30.0;  // noise level
    double f = 10.0;

    void validate() const;
};

/// Thorp absorption in dB/km.
double thorp_alpha(double f_khz);

/// Spherical spreading plus absorption; d in metres.
double transmission_loss(double d, double f_khz);

/// SL - 2 TL + TS - (NL - DI) - DT. Detection iff >= 0.
double active_echo_margin(double d, const HydroParams& hp);

/// One-way SNR between two vehicles: SL - TL - NL + DI.
double passive_snr(double d, const HydroParams& hp);

/// Largest range with non-negative echo margin (bisection, 1e-3 m).
/// Throws DomainError when nothing is ever detectable.
double detection_radius(const HydroParams& hp);

}  // namespace auvtrack
