#pragma once

// Spectral model of the color setting reader: stellar blackbody number flux,
// atmospheric extinction scaled to the observation airmass, optics and
// detector response, dichroic which-way probabilities, wrong-way fractions
// and the optimal color cutoff.

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <cstdint>

namespace starbell {

struct SpectralCurve {
    std::vector<double> wavelength_nm;  // strictly ascending
    std::vector<double> value;

    void validate(bool probability = false) const;
    std::size_t size() const { return wavelength_nm.size(); }
    double min_wavelength() const { return wavelength_nm.front(); }
    double max_wavelength() const { return wavelength_nm.back(); }
    // Linear interpolation; throws outside the support (no extrapolation).
    double value_at(double nm) const;

    static SpectralCurve constant(const std::vector<double>& grid, double v);
};

// Two-column whitespace-delimited text, '#' starts a comment line.
SpectralCurve load_curve(std::istream& stream, const std::string& name = "curve");
SpectralCurve load_curve_file(const std::string& path);
void save_curve(std::ostream& stream, const SpectralCurve& curve);

std::vector<double> make_grid(double from_nm, double to_nm, double step_nm);

// Union of all grid points restricted to the curves' common support.
std::vector<double> common_grid(const std::vector<const SpectralCurve*>& curves);

SpectralCurve resample(const SpectralCurve& curve, const std::vector<double>& grid);

double integrate_trapezoid(const SpectralCurve& curve);

// Order-stable checksum of a curve, for golden-file regression tests.
std::uint64_t curve_checksum(const SpectralCurve& curve);

// Planck number flux per wavelength, 2c/lambda^4 / (exp(hc/(lambda k T)) - 1).
// Photon-number form (lambda^-4), not the energy form (lambda^-5); the
// reader counts photons. Unnormalized: downstream quantities are ratios.
SpectralCurve blackbody(double temperature_k, const std::vector<double>& grid_nm);

// T_X(lambda) = T_zenith(lambda)^X. Zenith values of zero are floored to
// 1e-12 and reported through `warnings` when provided.
SpectralCurve apply_airmass(const SpectralCurve& zenith_transmission, double airmass_x,
                            std::vector<std::string>* warnings = nullptr);

struct SettingReaderModel {
    SpectralCurve shortpass_transmission;  // rho_{T,s}; blue arm
    SpectralCurve shortpass_reflection;    // rho_{R,s}
    SpectralCurve longpass_transmission;   // rho_{T,l}; red arm behind the shortpass
    SpectralCurve lens;                    // per-lens transmission (two in the path)
    SpectralCurve mirror;
    SpectralCurve detector;                // quantum efficiency
    SpectralCurve atmosphere_zenith;

    void validate() const;
    // rho_blue = rho_{T,s}; rho_red = rho_{R,s} * rho_{T,l}
    SpectralCurve rho_blue(const std::vector<double>& grid) const;
    SpectralCurve rho_red(const std::vector<double>& grid) const;
};

// N_in = N_star * rho_atm^X * rho_lens^2 * rho_mirror * rho_det on the finest
// common grid.
SpectralCurve compose_input_spectrum(const SpectralCurve& star,
                                     const SettingReaderModel& model, double airmass_x);

struct WrongWayFractions {
    double f_red_to_blue;
    double f_blue_to_red;
};

// Wrong-way fractions at a given cutoff; trapezoidal quadrature, the band
// integrals split exactly at the cutoff.
WrongWayFractions wrong_way_fractions(const SpectralCurve& n_in,
                                      const SettingReaderModel& model, double cutoff_nm);

struct WrongWayReport {
    double cutoff_nm;
    double f_red_to_blue;
    double f_blue_to_red;
    double efficiency;  // settings generated per photon at the aperture
};

// Scans grid points for the cutoff minimizing the total wrong-settings
// fraction (ties resolved toward the smallest wavelength).
WrongWayReport optimal_cutoff(const SpectralCurve& star, const SettingReaderModel& model,
                              double airmass_x);

}  // namespace starbell
