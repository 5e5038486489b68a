#pragma once

// Observation geometry: WGS-84 site positions, topocentric star directions
// from a low-order sidereal-time ephemeris, setting-validity windows for a
// two-station experiment with a central source, atmospheric light-cone
// delay, and past light-cone intersection (lookback) times.
//
// Ephemeris accuracy: Greenwich mean sidereal time only; precession,
// nutation, aberration and refraction are neglected, which bounds pointing
// errors below ~0.5 degrees for epochs 1990-2100. Validity windows carry
// microsecond-scale buffers that dwarf the resulting timing error.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace starbell {

constexpr double kSpeedOfLight = 299792458.0;            // m/s, exact
constexpr double kMetersPerLightYear = 9.4607304725808e15;
constexpr double kLightYearsPerParsec = 3.2616;

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const
    {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const;
    Vec3 normalized() const;
};

struct GeodeticSite {
    std::string label;        // "A", "B" or "S"
    double latitude_deg = 0.0;
    double longitude_deg = 0.0;  // east-positive, normalized to (-180, 180]
    double elevation_m = 0.0;

    void validate() const;
};

struct CelestialTarget {
    std::string catalogue_id;
    double ra_deg = 0.0;
    double dec_deg = 0.0;
    double parallax_mas = 0.0;
    double parallax_error_mas = 0.0;
    double distance_ly = 0.0;
    double distance_error_ly = 0.0;
    double hp_magnitude = 0.0;

    // Builds a target with the distance derived from the parallax.
    static CelestialTarget from_parallax(std::string catalogue_id, double ra_deg,
                                         double dec_deg, double parallax_mas,
                                         double parallax_error_mas, double hp_magnitude);
    void validate() const;
};

struct TimingBudget {
    double tau_set_s = 170e-9;
    double tau_buffer_a_s = 0.38e-6;
    double tau_buffer_b_s = 1.76e-6;
    double tau_atm_s = 18e-9;
    double index_air = 1.00027;
    double cable_delay_a = 0.0;  // group-delay parameters; zero under the
    double cable_delay_b = 0.0;  // co-located receiver approximation

    void validate() const;
};

struct UtcTime {
    int year = 2000;
    int month = 1;
    int day = 1;
    int hour = 0;
    int minute = 0;
    double second = 0.0;
};

// Julian date (UT) of a Gregorian-calendar instant.
double julian_date(const UtcTime& utc);

// Greenwich mean sidereal time in degrees, normalized to [0, 360).
double gmst_deg(double jd);

struct StarPointing {
    Vec3 unit_ecef;        // unit vector from the site toward the star
    double azimuth_deg;    // clockwise from North
    double altitude_deg;   // above the horizon
};

// Earth-centered Earth-fixed position on the WGS-84 ellipsoid plus elevation.
Vec3 site_to_ecef(const GeodeticSite& site);

StarPointing star_direction(const CelestialTarget& target, const UtcTime& utc,
                            const GeodeticSite& site);
StarPointing star_direction_jd(const CelestialTarget& target, double jd,
                               const GeodeticSite& site);

enum class Side { A, B };

struct SiteLayout {
    GeodeticSite alice;
    GeodeticSite bob;
    GeodeticSite source;
};

struct ValiditySample {
    double t_offset_s;   // seconds from the run start
    double tau_valid_s;
};

struct ValidityProfile {
    Side side = Side::A;
    std::vector<ValiditySample> samples;
    double min_tau_valid_s = 0.0;
};

class CausalMisalignmentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Samples tau_valid(t) for both sides over [start, start + duration].
// tau_valid^A(t) = (1/c) n_A(t) . (r_A - r_B)
//                + (n/c) (|r_A - s| - |r_B - s|)
//                - (eta_A/c) |r_A - m_A|
// with the receiver co-location approximation r = m zeroing the last term.
// Throws CausalMisalignmentError if any sampled value is <= 0.
std::pair<ValidityProfile, ValidityProfile> validity_times(
    const SiteLayout& layout, const CelestialTarget& star_a,
    const CelestialTarget& star_b, const TimingBudget& budget,
    const UtcTime& run_start, double duration_s, double step_s = 1.0);

// Single-side validity profile; does not signal on nonpositive samples
// (used when screening candidate stars, where misalignment is a flag
// rather than an error).
ValidityProfile side_validity_profile(const SiteLayout& layout,
                                      const CelestialTarget& star, Side side,
                                      const TimingBudget& budget,
                                      const UtcTime& run_start, double duration_s,
                                      double step_s = 1.0);

class WindowExhaustedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Usable window after subtracting the per-side buffer and the setting
// implementation time. Throws WindowExhaustedError when nothing remains.
double tau_used(double min_valid_s, const TimingBudget& budget, Side side);

// Light-cone-vs-photon delay through an exponential atmosphere of scale
// height z0 traversed at airmass X from elevation h.
double atmospheric_delay_s(double elevation_h_m, double airmass_x,
                           double scale_height_z0_m, double n_minus_1);

// Plane-parallel secant airmass; altitude must lie in (0, 90].
double airmass(double altitude_deg);

// Great-circle angle between two catalogue positions, degrees.
double angular_separation_deg(const CelestialTarget& a, const CelestialTarget& b);

struct LookbackResult {
    double t_years;
    double sigma_years;
};

// Lookback time to the intersection of the two stars' past light cones,
// t = (dA + dB + sqrt(dA^2 + dB^2 - 2 dA dB cos alpha)) / 2, with the
// first-order error propagated from the distance errors (the angular
// separation error is neglected).
LookbackResult lookback_intersection(double d_a_ly, double sigma_a_ly,
                                     double d_b_ly, double sigma_b_ly,
                                     double alpha_deg);

}  // namespace starbell
