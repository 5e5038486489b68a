#include "starbell/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace starbell {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

// WGS-84 ellipsoid
constexpr double kWgs84SemiMajorM = 6378137.0;
constexpr double kWgs84Flattening = 1.0 / 298.257223563;
constexpr double kWgs84E2 = kWgs84Flattening * (2.0 - kWgs84Flattening);

double wrap_degrees(double deg)
{
    double w = std::fmod(deg, 360.0);
    if (w < 0.0) w += 360.0;
    return w;
}

}  // namespace

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Vec3 Vec3::normalized() const
{
    const double n = norm();
    if (n == 0.0) throw std::invalid_argument("normalized: zero vector");
    return {x / n, y / n, z / n};
}

void GeodeticSite::validate() const
{
    if (!std::isfinite(latitude_deg) || std::abs(latitude_deg) > 90.0)
        throw std::invalid_argument("site " + label + ": latitude out of range");
    if (!std::isfinite(longitude_deg) || longitude_deg <= -180.0 || longitude_deg > 180.0)
        throw std::invalid_argument("site " + label + ": longitude must lie in (-180, 180]");
    if (!std::isfinite(elevation_m))
        throw std::invalid_argument("site " + label + ": elevation not finite");
}

CelestialTarget CelestialTarget::from_parallax(std::string catalogue_id, double ra_deg,
                                               double dec_deg, double parallax_mas,
                                               double parallax_error_mas, double hp_magnitude)
{
    if (!(parallax_mas > 0.0))
        throw std::invalid_argument("target " + catalogue_id + ": nonpositive parallax");
    CelestialTarget t;
    t.catalogue_id = std::move(catalogue_id);
    t.ra_deg = ra_deg;
    t.dec_deg = dec_deg;
    t.parallax_mas = parallax_mas;
    t.parallax_error_mas = parallax_error_mas;
    t.hp_magnitude = hp_magnitude;
    t.distance_ly = 1000.0 * kLightYearsPerParsec / parallax_mas;
    t.distance_error_ly = t.distance_ly * parallax_error_mas / parallax_mas;
    t.validate();
    return t;
}

void CelestialTarget::validate() const
{
    if (!std::isfinite(ra_deg) || !std::isfinite(dec_deg) || std::abs(dec_deg) > 90.0)
        throw std::invalid_argument("target " + catalogue_id + ": bad coordinates");
    if (!(parallax_mas > 0.0))
        throw std::invalid_argument("target " + catalogue_id + ": nonpositive parallax");
    const double implied = 1000.0 * kLightYearsPerParsec / parallax_mas;
    if (std::abs(implied - distance_ly) > 1e-6 * implied)
        throw std::invalid_argument("target " + catalogue_id + ": distance inconsistent with parallax");
}

void TimingBudget::validate() const
{
    if (tau_set_s < 0.0 || tau_buffer_a_s < 0.0 || tau_buffer_b_s < 0.0 || tau_atm_s < 0.0)
        throw std::invalid_argument("timing budget: negative delay");
    if (index_air < 1.0)
        throw std::invalid_argument("timing budget: index of refraction below 1");
}

double julian_date(const UtcTime& utc)
{
    const int a = (14 - utc.month) / 12;
    const int y = utc.year + 4800 - a;
    const int m = utc.month + 12 * a - 3;
    const long jdn = utc.day + (153 * m + 2) / 5 + 365L * y + y / 4 - y / 100 + y / 400 - 32045;
    const double day_fraction =
        (utc.hour - 12) / 24.0 + utc.minute / 1440.0 + utc.second / 86400.0;
    return static_cast<double>(jdn) + day_fraction;
}

double gmst_deg(double jd)
{
    const double d = jd - 2451545.0;
    const double t = d / 36525.0;
    const double gmst = 280.46061837 + 360.98564736629 * d + 0.000387933 * t * t
                        - t * t * t / 38710000.0;
    return wrap_degrees(gmst);
}

Vec3 site_to_ecef(const GeodeticSite& site)
{
    site.validate();
    const double lat = site.latitude_deg * kDegToRad;
    const double lon = site.longitude_deg * kDegToRad;
    const double sin_lat = std::sin(lat);
    const double n = kWgs84SemiMajorM / std::sqrt(1.0 - kWgs84E2 * sin_lat * sin_lat);
    const double h = site.elevation_m;
    return {(n + h) * std::cos(lat) * std::cos(lon),
            (n + h) * std::cos(lat) * std::sin(lon),
            (n * (1.0 - kWgs84E2) + h) * sin_lat};
}

StarPointing star_direction_jd(const CelestialTarget& target, double jd,
                               const GeodeticSite& site)
{
    if (!std::isfinite(target.ra_deg) || !std::isfinite(target.dec_deg))
        throw std::invalid_argument("star_direction: non-finite coordinates");
    site.validate();

    // Earth-fixed equatorial direction; the hour angle enters through GMST.
    const double theta = gmst_deg(jd) * kDegToRad;
    const double ra = target.ra_deg * kDegToRad;
    const double dec = target.dec_deg * kDegToRad;
    const Vec3 u{std::cos(dec) * std::cos(ra - theta),
                 std::cos(dec) * std::sin(ra - theta),
                 std::sin(dec)};

    const double lat = site.latitude_deg * kDegToRad;
    const double lon = site.longitude_deg * kDegToRad;
    const Vec3 east{-std::sin(lon), std::cos(lon), 0.0};
    const Vec3 north{-std::sin(lat) * std::cos(lon), -std::sin(lat) * std::sin(lon),
                     std::cos(lat)};
    const Vec3 up{std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon),
                  std::sin(lat)};

    StarPointing p;
    p.unit_ecef = u;
    p.altitude_deg = std::asin(std::clamp(u.dot(up), -1.0, 1.0)) / kDegToRad;
    p.azimuth_deg = wrap_degrees(std::atan2(u.dot(east), u.dot(north)) / kDegToRad);
    return p;
}

StarPointing star_direction(const CelestialTarget& target, const UtcTime& utc,
                            const GeodeticSite& site)
{
    if (utc.year < 1990 || utc.year > 2100)
        throw std::invalid_argument("star_direction: epoch outside supported era 1990-2100");
    return star_direction_jd(target, julian_date(utc), site);
}

ValidityProfile side_validity_profile(const SiteLayout& layout,
                                      const CelestialTarget& star, Side side,
                                      const TimingBudget& budget,
                                      const UtcTime& run_start, double duration_s,
                                      double step_s)
{
    if (!(step_s > 0.0)) throw std::invalid_argument("validity profile: step must be positive");
    budget.validate();

    const Vec3 r_a = site_to_ecef(layout.alice);
    const Vec3 r_b = site_to_ecef(layout.bob);
    const Vec3 s = site_to_ecef(layout.source);

    // Baseline points from the distant station toward this side's receiver.
    const Vec3 baseline = side == Side::A ? r_a - r_b : r_b - r_a;
    const GeodeticSite& here = side == Side::A ? layout.alice : layout.bob;
    double fiber_asym =
        budget.index_air / kSpeedOfLight * ((r_a - s).norm() - (r_b - s).norm());
    if (side == Side::B) fiber_asym = -fiber_asym;
    // Receivers are co-located with the measurement stations, so the
    // cable-delay terms multiply a zero distance.

    const double jd0 = julian_date(run_start);
    ValidityProfile prof{side, {}, 0.0};
    double min_tau = std::numeric_limits<double>::infinity();
    for (double t = 0.0;; t += step_s) {
        const bool last = t >= duration_s;
        const double t_clamped = last ? duration_s : t;
        const double jd = jd0 + t_clamped / 86400.0;
        const Vec3 n_star = star_direction_jd(star, jd, here).unit_ecef;
        const double tau = n_star.dot(baseline) / kSpeedOfLight + fiber_asym;
        prof.samples.push_back({t_clamped, tau});
        min_tau = std::min(min_tau, tau);
        if (last) break;
    }
    prof.min_tau_valid_s = min_tau;
    return prof;
}

std::pair<ValidityProfile, ValidityProfile> validity_times(
    const SiteLayout& layout, const CelestialTarget& star_a,
    const CelestialTarget& star_b, const TimingBudget& budget,
    const UtcTime& run_start, double duration_s, double step_s)
{
    ValidityProfile prof_a =
        side_validity_profile(layout, star_a, Side::A, budget, run_start, duration_s, step_s);
    ValidityProfile prof_b =
        side_validity_profile(layout, star_b, Side::B, budget, run_start, duration_s, step_s);
    if (prof_a.min_tau_valid_s <= 0.0 || prof_b.min_tau_valid_s <= 0.0)
        throw CausalMisalignmentError(
            "causal misalignment: nonpositive validity time for side " +
            std::string(prof_a.min_tau_valid_s <= 0.0 ? "A" : "B"));
    return {prof_a, prof_b};
}

double tau_used(double min_valid_s, const TimingBudget& budget, Side side)
{
    budget.validate();
    const double buffer = side == Side::A ? budget.tau_buffer_a_s : budget.tau_buffer_b_s;
    if (!(min_valid_s > buffer + budget.tau_set_s))
        throw WindowExhaustedError("window exhausted: buffers exceed the validity time");
    return min_valid_s - buffer - budget.tau_set_s;
}

double atmospheric_delay_s(double elevation_h_m, double airmass_x,
                           double scale_height_z0_m, double n_minus_1)
{
    if (airmass_x != 0.0 && airmass_x < 1.0)
        throw std::invalid_argument("atmospheric_delay: airmass below 1");
    if (!(scale_height_z0_m > elevation_h_m))
        throw std::invalid_argument("atmospheric_delay: scale height below site elevation");
    return (scale_height_z0_m - elevation_h_m) * airmass_x * n_minus_1 / kSpeedOfLight;
}

double airmass(double altitude_deg)
{
    if (!(altitude_deg > 0.0) || altitude_deg > 90.0)
        throw std::invalid_argument("airmass: altitude must lie in (0, 90]");
    return 1.0 / std::sin(altitude_deg * kDegToRad);
}

double angular_separation_deg(const CelestialTarget& a, const CelestialTarget& b)
{
    const auto unit = [](const CelestialTarget& t) {
        const double ra = t.ra_deg * kDegToRad;
        const double dec = t.dec_deg * kDegToRad;
        return Vec3{std::cos(dec) * std::cos(ra), std::cos(dec) * std::sin(ra),
                    std::sin(dec)};
    };
    const Vec3 u = unit(a);
    const Vec3 v = unit(b);
    return std::atan2(u.cross(v).norm(), u.dot(v)) / kDegToRad;
}

LookbackResult lookback_intersection(double d_a_ly, double sigma_a_ly, double d_b_ly,
                                     double sigma_b_ly, double alpha_deg)
{
    if (!(d_a_ly > 0.0) || !(d_b_ly > 0.0))
        throw std::invalid_argument("lookback_intersection: distances must be positive");
    if (sigma_a_ly < 0.0 || sigma_b_ly < 0.0)
        throw std::invalid_argument("lookback_intersection: negative distance error");

    const double cos_alpha = std::cos(alpha_deg * kDegToRad);
    const double root = std::sqrt(std::max(
        0.0, d_a_ly * d_a_ly + d_b_ly * d_b_ly - 2.0 * d_a_ly * d_b_ly * cos_alpha));
    const double t = 0.5 * (d_a_ly + d_b_ly + root);

    LookbackResult res{t, 0.0};
    const double denom = 2.0 * t - d_a_ly - d_b_ly;  // equals root
    if (denom < 1e-9 * (d_a_ly + d_b_ly)) {
        // Degenerate coincident-direction case: the intersection tracks the
        // more distant star.
        res.sigma_years = std::max(sigma_a_ly, sigma_b_ly);
        return res;
    }
    const double term_a = sigma_a_ly * (t - 0.5 * d_b_ly * (1.0 + cos_alpha));
    const double term_b = sigma_b_ly * (t - 0.5 * d_a_ly * (1.0 + cos_alpha));
    res.sigma_years = std::sqrt(term_a * term_a + term_b * term_b) / denom;
    return res;
}

}  // namespace starbell
