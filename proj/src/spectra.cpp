#include "starbell/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace starbell {

namespace {

constexpr double kHcOverK_nmK = 1.4387768775039337e7;  // hc/k_B in nm*K
constexpr double kTransmissionFloor = 1e-12;

void check_grid(const std::vector<double>& grid)
{
    if (grid.size() < 2) throw std::invalid_argument("spectral grid needs >= 2 points");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1]))
            throw std::invalid_argument("spectral grid must be strictly ascending");
}

// Trapezoid integral of curve * weight over [from, to], with exact linear
// splits at the interval ends.
double integrate_product(const SpectralCurve& a, const SpectralCurve& b, double from,
                         double to)
{
    const std::vector<double>& grid = a.wavelength_nm;
    if (from >= to) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        const double lo = std::max(from, grid[i]);
        const double hi = std::min(to, grid[i + 1]);
        if (lo >= hi) continue;
        const double fa = a.value_at(lo) * b.value_at(lo);
        const double fb = a.value_at(hi) * b.value_at(hi);
        sum += 0.5 * (fa + fb) * (hi - lo);
    }
    return sum;
}

}  // namespace

void SpectralCurve::validate(bool probability) const
{
    if (wavelength_nm.size() != value.size())
        throw std::invalid_argument("spectral curve: grid/value size mismatch");
    check_grid(wavelength_nm);
    for (double v : value) {
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("spectral curve: negative or non-finite value");
        if (probability && v > 1.0 + 1e-12)
            throw std::invalid_argument("spectral curve: probability above 1");
    }
}

double SpectralCurve::value_at(double nm) const
{
    const auto& grid = wavelength_nm;
    if (nm < grid.front() || nm > grid.back())
        throw std::out_of_range("spectral curve: wavelength outside support");
    const auto it = std::lower_bound(grid.begin(), grid.end(), nm);
    const std::size_t hi = std::min<std::size_t>(
        std::max<std::ptrdiff_t>(1, it - grid.begin()), grid.size() - 1);
    const std::size_t lo = hi - 1;
    const double t = (nm - grid[lo]) / (grid[hi] - grid[lo]);
    return value[lo] + t * (value[hi] - value[lo]);
}

SpectralCurve SpectralCurve::constant(const std::vector<double>& grid, double v)
{
    SpectralCurve c;
    c.wavelength_nm = grid;
    c.value.assign(grid.size(), v);
    return c;
}

SpectralCurve load_curve(std::istream& stream, const std::string& name)
{
    SpectralCurve curve;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(stream, line)) {
        ++line_number;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        double nm = 0.0, v = 0.0;
        if (!(ss >> nm >> v))
            throw std::runtime_error(name + ": bad row at line " + std::to_string(line_number));
        curve.wavelength_nm.push_back(nm);
        curve.value.push_back(v);
    }
    curve.validate();
    return curve;
}

SpectralCurve load_curve_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open spectral curve file " + path);
    return load_curve(in, path);
}

void save_curve(std::ostream& stream, const SpectralCurve& curve)
{
    stream << "# wavelength_nm value\n";
    char buf[64];
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f %.9e\n", curve.wavelength_nm[i], curve.value[i]);
        stream << buf;
    }
}

std::vector<double> make_grid(double from_nm, double to_nm, double step_nm)
{
    if (!(step_nm > 0.0) || !(to_nm > from_nm))
        throw std::invalid_argument("make_grid: bad range or step");
    std::vector<double> grid;
    const auto n = static_cast<std::size_t>(std::floor((to_nm - from_nm) / step_nm + 1e-9));
    grid.reserve(n + 2);
    for (std::size_t i = 0; i <= n; ++i) grid.push_back(from_nm + i * step_nm);
    if (grid.back() < to_nm - 1e-9) grid.push_back(to_nm);
    return grid;
}

std::vector<double> common_grid(const std::vector<const SpectralCurve*>& curves)
{
    if (curves.empty()) throw std::invalid_argument("common_grid: no curves");
    double lo = curves.front()->min_wavelength();
    double hi = curves.front()->max_wavelength();
    for (const SpectralCurve* c : curves) {
        lo = std::max(lo, c->min_wavelength());
        hi = std::min(hi, c->max_wavelength());
    }
    if (!(hi > lo)) throw std::runtime_error("common_grid: curves have no overlapping support");
    std::set<double> points;
    for (const SpectralCurve* c : curves)
        for (double nm : c->wavelength_nm)
            if (nm >= lo && nm <= hi) points.insert(nm);
    points.insert(lo);
    points.insert(hi);
    return {points.begin(), points.end()};
}

SpectralCurve resample(const SpectralCurve& curve, const std::vector<double>& grid)
{
    check_grid(grid);
    if (grid.front() < curve.min_wavelength() - 1e-9 ||
        grid.back() > curve.max_wavelength() + 1e-9)
        throw std::out_of_range("resample: extrapolation is not allowed");
    SpectralCurve out;
    out.wavelength_nm = grid;
    out.value.reserve(grid.size());
    for (double nm : grid)
        out.value.push_back(curve.value_at(std::clamp(nm, curve.min_wavelength(),
                                                      curve.max_wavelength())));
    return out;
}

double integrate_trapezoid(const SpectralCurve& curve)
{
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < curve.size(); ++i)
        sum += 0.5 * (curve.value[i] + curve.value[i + 1]) *
               (curve.wavelength_nm[i + 1] - curve.wavelength_nm[i]);
    return sum;
}

std::uint64_t curve_checksum(const SpectralCurve& curve)
{
    // FNV-1a over fixed-format decimal renderings; stable across platforms.
    std::uint64_t h = 1469598103934665603ull;
    char buf[64];
    const auto mix = [&](const char* s) {
        for (; *s; ++s) {
            h ^= static_cast<unsigned char>(*s);
            h *= 1099511628211ull;
        }
    };
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f:%.9e;", curve.wavelength_nm[i], curve.value[i]);
        mix(buf);
    }
    return h;
}

SpectralCurve blackbody(double temperature_k, const std::vector<double>& grid_nm)
{
    if (!(temperature_k > 0.0))
        throw std::invalid_argument("blackbody: temperature must be positive");
    check_grid(grid_nm);
    SpectralCurve curve;
    curve.wavelength_nm = grid_nm;
    curve.value.reserve(grid_nm.size());
    for (double nm : grid_nm) {
        const double x = kHcOverK_nmK / (nm * temperature_k);
        const double lambda4 = std::pow(nm, 4);
        curve.value.push_back(1.0 / (lambda4 * std::expm1(x)));
    }
    return curve;
}

SpectralCurve apply_airmass(const SpectralCurve& zenith_transmission, double airmass_x,
                            std::vector<std::string>* warnings)
{
    zenith_transmission.validate(true);
    if (!(airmass_x >= 1.0)) throw std::invalid_argument("apply_airmass: airmass below 1");
    SpectralCurve out = zenith_transmission;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double t = out.value[i];
        if (t <= 0.0) {
            if (warnings)
                warnings->push_back("zenith transmission floored to 1e-12 at " +
                                    std::to_string(out.wavelength_nm[i]) + " nm");
            t = kTransmissionFloor;
        }
        out.value[i] = std::pow(t, airmass_x);
    }
    return out;
}

void SettingReaderModel::validate() const
{
    shortpass_transmission.validate(true);
    shortpass_reflection.validate(true);
    longpass_transmission.validate(true);
    lens.validate(true);
    mirror.validate(true);
    detector.validate(true);
    atmosphere_zenith.validate(true);
}

SpectralCurve SettingReaderModel::rho_blue(const std::vector<double>& grid) const
{
    return resample(shortpass_transmission, grid);
}

SpectralCurve SettingReaderModel::rho_red(const std::vector<double>& grid) const
{
    const SpectralCurve r = resample(shortpass_reflection, grid);
    const SpectralCurve l = resample(longpass_transmission, grid);
    SpectralCurve out = r;
    for (std::size_t i = 0; i < out.size(); ++i) out.value[i] = r.value[i] * l.value[i];
    return out;
}

SpectralCurve compose_input_spectrum(const SpectralCurve& star,
                                     const SettingReaderModel& model, double airmass_x)
{
    model.validate();
    const SpectralCurve atm = apply_airmass(model.atmosphere_zenith, airmass_x);
    const std::vector<double> grid =
        common_grid({&star, &atm, &model.lens, &model.mirror, &model.detector});

    const SpectralCurve s = resample(star, grid);
    const SpectralCurve a = resample(atm, grid);
    const SpectralCurve l = resample(model.lens, grid);
    const SpectralCurve m = resample(model.mirror, grid);
    const SpectralCurve d = resample(model.detector, grid);

    SpectralCurve out;
    out.wavelength_nm = grid;
    out.value.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        out.value.push_back(s.value[i] * a.value[i] * l.value[i] * l.value[i] * m.value[i] *
                            d.value[i]);
    return out;
}

namespace {

struct BandIntegrals {
    double n_rb, n_rr, n_br, n_bb;
};

BandIntegrals band_integrals(const SpectralCurve& n_in, const SpectralCurve& rho_b,
                             const SpectralCurve& rho_r, double cutoff_nm)
{
    const double lo = n_in.min_wavelength();
    const double hi = n_in.max_wavelength();
    BandIntegrals b{};
    b.n_rb = integrate_product(n_in, rho_b, cutoff_nm, hi);
    b.n_rr = integrate_product(n_in, rho_r, cutoff_nm, hi);
    b.n_br = integrate_product(n_in, rho_r, lo, cutoff_nm);
    b.n_bb = integrate_product(n_in, rho_b, lo, cutoff_nm);
    return b;
}

}  // namespace

namespace {

// Finest grid carrying both the input spectrum and the dichroic features.
std::vector<double> reader_grid(const SpectralCurve& n_in, const SettingReaderModel& model)
{
    return common_grid({&n_in, &model.shortpass_transmission, &model.shortpass_reflection,
                        &model.longpass_transmission});
}

}  // namespace

WrongWayFractions wrong_way_fractions(const SpectralCurve& n_in,
                                      const SettingReaderModel& model, double cutoff_nm)
{
    if (cutoff_nm < n_in.min_wavelength() || cutoff_nm > n_in.max_wavelength())
        throw std::out_of_range("wrong_way_fractions: cutoff outside grid range");
    const std::vector<double> grid = reader_grid(n_in, model);
    const SpectralCurve n = resample(n_in, grid);
    const SpectralCurve rho_b = model.rho_blue(grid);
    const SpectralCurve rho_r = model.rho_red(grid);
    const BandIntegrals b = band_integrals(n, rho_b, rho_r, cutoff_nm);
    if (b.n_rb + b.n_rr <= 0.0 || b.n_br + b.n_bb <= 0.0)
        throw std::runtime_error("wrong_way_fractions: no photons in band");
    return {b.n_rb / (b.n_rb + b.n_rr), b.n_br / (b.n_br + b.n_bb)};
}

WrongWayReport optimal_cutoff(const SpectralCurve& star, const SettingReaderModel& model,
                              double airmass_x)
{
    const SpectralCurve composed = compose_input_spectrum(star, model, airmass_x);
    const std::vector<double> grid = reader_grid(composed, model);
    const SpectralCurve n_in = resample(composed, grid);
    const SpectralCurve rho_b = model.rho_blue(grid);
    const SpectralCurve rho_r = model.rho_red(grid);

    double best_cutoff = 0.0;
    double best_objective = std::numeric_limits<double>::infinity();
    for (double cutoff : n_in.wavelength_nm) {
        const BandIntegrals b = band_integrals(n_in, rho_b, rho_r, cutoff);
        const double total = b.n_rb + b.n_rr + b.n_br + b.n_bb;
        if (!(total > 0.0)) throw std::runtime_error("optimal_cutoff: no photons in band");
        const double objective = (b.n_rb + b.n_br) / total;
        if (objective < best_objective) {  // ties keep the earlier (smaller) cutoff
            best_objective = objective;
            best_cutoff = cutoff;
        }
    }

    WrongWayReport report{};
    report.cutoff_nm = best_cutoff;
    const WrongWayFractions f = wrong_way_fractions(n_in, model, best_cutoff);
    report.f_red_to_blue = f.f_red_to_blue;
    report.f_blue_to_red = f.f_blue_to_red;

    // Settings generated per stellar photon arriving at the aperture, over
    // the modeled wavelength range.
    SpectralCurve settings_flux = n_in;
    for (std::size_t i = 0; i < settings_flux.size(); ++i)
        settings_flux.value[i] = n_in.value[i] * (rho_b.value[i] + rho_r.value[i]);
    const SpectralCurve star_overlap = resample(star, n_in.wavelength_nm);
    const double photons_at_aperture = integrate_trapezoid(star_overlap);
    if (!(photons_at_aperture > 0.0))
        throw std::runtime_error("optimal_cutoff: empty source spectrum");
    report.efficiency = integrate_trapezoid(settings_flux) / photons_at_aperture;
    return report;
}

}  // namespace starbell
