#include "starbell/catalogue.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace starbell {

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        // trim surrounding whitespace
        const auto begin = field.find_first_not_of(" \t\r");
        const auto end = field.find_last_not_of(" \t\r");
        fields.push_back(begin == std::string::npos ? ""
                                                    : field.substr(begin, end - begin + 1));
    }
    return fields;
}

double parse_double(const std::string& text, const char* what)
{
    std::size_t consumed = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &consumed);
    } catch (const std::exception&) {
        throw CatalogueFormatError(std::string("unparsable ") + what + " '" + text + "'");
    }
    if (consumed != text.size() || !std::isfinite(value))
        throw CatalogueFormatError(std::string("unparsable ") + what + " '" + text + "'");
    return value;
}

double min_max_normalize(double v, double lo, double hi)
{
    if (!(hi > lo)) return 0.5;
    return (v - lo) / (hi - lo);
}

}  // namespace

CatalogueParseResult parse_catalogue(std::istream& stream, bool lenient)
{
    static const char* kColumns[] = {"hip", "ra_deg", "dec_deg", "plx_mas", "e_plx_mas", "hp_mag"};

    std::string line;
    if (!std::getline(stream, line))
        throw CatalogueFormatError("empty catalogue: missing header row");
    const std::vector<std::string> header = split_csv(line);

    std::map<std::string, std::size_t> column_index;
    for (std::size_t i = 0; i < header.size(); ++i) column_index[header[i]] = i;
    for (const char* name : kColumns)
        if (!column_index.count(name))
            throw CatalogueFormatError(std::string("missing column '") + name + "'");

    CatalogueParseResult result;
    std::size_t line_number = 1;
    while (std::getline(stream, line)) {
        ++line_number;
        if (line.empty() || line[0] == '#') continue;
        const std::vector<std::string> fields = split_csv(line);
        try {
            if (fields.size() < header.size())
                throw CatalogueFormatError("too few fields");
            CatalogueRecord rec;
            rec.hip_id = fields[column_index["hip"]];
            rec.ra_deg = parse_double(fields[column_index["ra_deg"]], "ra_deg");
            rec.dec_deg = parse_double(fields[column_index["dec_deg"]], "dec_deg");
            rec.parallax_mas = parse_double(fields[column_index["plx_mas"]], "plx_mas");
            rec.parallax_error_mas = parse_double(fields[column_index["e_plx_mas"]], "e_plx_mas");
            rec.hp_magnitude = parse_double(fields[column_index["hp_mag"]], "hp_mag");
            if (rec.hip_id.empty()) throw CatalogueFormatError("empty hip id");
            if (!(rec.parallax_mas > 0.0)) throw CatalogueFormatError("nonpositive parallax");
            if (rec.parallax_error_mas < 0.0) throw CatalogueFormatError("negative parallax error");
            result.records.push_back(std::move(rec));
        } catch (const CatalogueFormatError& err) {
            const std::string diagnostic =
                "line " + std::to_string(line_number) + ": " + err.what();
            result.diagnostics.push_back(diagnostic);
            if (!lenient) throw CatalogueFormatError(diagnostic);
        }
    }
    return result;
}

DistanceEstimate parallax_to_distance(double parallax_mas, double parallax_error_mas)
{
    if (!(parallax_mas > 0.0))
        throw std::invalid_argument("parallax_to_distance: nonpositive parallax");
    const double d = 1000.0 * kLightYearsPerParsec / parallax_mas;
    return {d, d * parallax_error_mas / parallax_mas};
}

bool SkyWindow::contains(double az_deg, double alt_deg) const
{
    if (alt_deg < alt_min_deg || alt_deg > alt_max_deg) return false;
    double az = std::fmod(az_deg, 360.0);
    if (az < 0.0) az += 360.0;
    if (az_min_deg <= az_max_deg) return az >= az_min_deg && az <= az_max_deg;
    return az >= az_min_deg || az <= az_max_deg;  // window wraps through North
}

void SelectionCriteria::validate() const
{
    if (!(min_distance_ly > 0.0))
        throw std::invalid_argument("selection: min_distance_ly must be positive");
    if (!(magnitude_max >= magnitude_min))
        throw std::invalid_argument("selection: empty magnitude range");
    if (!(window.alt_max_deg >= window.alt_min_deg))
        throw std::invalid_argument("selection: empty altitude range");
    if (!(sample_step_s > 0.0))
        throw std::invalid_argument("selection: sample step must be positive");
    if (min_visible_fraction < 0.0 || min_visible_fraction > 1.0)
        throw std::invalid_argument("selection: min_visible_fraction outside [0, 1]");
}

std::vector<RankedCandidate> select_candidates(const std::vector<CatalogueRecord>& records,
                                               const SelectionCriteria& criteria,
                                               const SiteLayout& layout, Side side,
                                               const TimingBudget& budget,
                                               const UtcTime& run_start, double duration_s)
{
    criteria.validate();
    const GeodeticSite& site = side == Side::A ? layout.alice : layout.bob;
    const double jd0 = julian_date(run_start);

    std::vector<RankedCandidate> out;
    for (const CatalogueRecord& rec : records) {
        const auto [distance, distance_error] =
            parallax_to_distance(rec.parallax_mas, rec.parallax_error_mas);
        if (distance < criteria.min_distance_ly) continue;
        if (distance_error > criteria.max_fractional_distance_error * distance) continue;
        if (rec.hp_magnitude < criteria.magnitude_min ||
            rec.hp_magnitude > criteria.magnitude_max)
            continue;

        CelestialTarget target = CelestialTarget::from_parallax(
            rec.hip_id, rec.ra_deg, rec.dec_deg, rec.parallax_mas, rec.parallax_error_mas,
            rec.hp_magnitude);

        // Sampled visibility through the sky window across the run.
        std::size_t n_samples = 0;
        std::size_t n_inside = 0;
        for (double t = 0.0;; t += criteria.sample_step_s) {
            const bool last = t >= duration_s;
            const double tc = last ? duration_s : t;
            const StarPointing p = star_direction_jd(target, jd0 + tc / 86400.0, site);
            ++n_samples;
            if (criteria.window.contains(p.azimuth_deg, p.altitude_deg)) ++n_inside;
            if (last) break;
        }
        const double visible_fraction =
            n_samples == 0 ? 0.0 : static_cast<double>(n_inside) / n_samples;
        if (visible_fraction + 1e-12 < criteria.min_visible_fraction) continue;

        RankedCandidate cand;
        cand.record = rec;
        cand.target = target;
        cand.visibility_duration_s = visible_fraction * duration_s;
        const StarPointing mid =
            star_direction_jd(target, jd0 + 0.5 * duration_s / 86400.0, site);
        cand.airmass_at_mid = mid.altitude_deg > 0.0
                                  ? airmass(mid.altitude_deg)
                                  : std::numeric_limits<double>::infinity();
        cand.min_tau_valid_s = side_validity_profile(layout, target, side, budget, run_start,
                                                     duration_s, criteria.sample_step_s)
                                   .min_tau_valid_s;
        out.push_back(std::move(cand));
    }

    // Normalized weighted score across the surviving set.
    if (!out.empty()) {
        const auto minmax_of = [&](auto getter) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -std::numeric_limits<double>::infinity();
            for (const auto& c : out) {
                const double v = getter(c);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            return std::pair{lo, hi};
        };
        const auto inv_airmass = [](const RankedCandidate& c) {
            return std::isfinite(c.airmass_at_mid) ? 1.0 / c.airmass_at_mid : 0.0;
        };
        const auto brightness = [](const RankedCandidate& c) {
            return -c.record.hp_magnitude;  // brighter is better
        };
        const auto [b_lo, b_hi] = minmax_of(brightness);
        const auto [d_lo, d_hi] =
            minmax_of([](const RankedCandidate& c) { return c.target.distance_ly; });
        const auto [v_lo, v_hi] =
            minmax_of([](const RankedCandidate& c) { return c.visibility_duration_s; });
        const auto [t_lo, t_hi] =
            minmax_of([](const RankedCandidate& c) { return c.min_tau_valid_s; });
        const auto [x_lo, x_hi] = minmax_of(inv_airmass);

        const ScoreWeights& w = criteria.weights;
        const double total = w.brightness + w.distance + w.visibility + w.validity + w.airmass;
        if (!(total > 0.0)) throw std::invalid_argument("selection: all score weights zero");
        for (auto& c : out) {
            c.score = (w.brightness * min_max_normalize(brightness(c), b_lo, b_hi) +
                       w.distance * min_max_normalize(c.target.distance_ly, d_lo, d_hi) +
                       w.visibility * min_max_normalize(c.visibility_duration_s, v_lo, v_hi) +
                       w.validity * min_max_normalize(c.min_tau_valid_s, t_lo, t_hi) +
                       w.airmass * min_max_normalize(inv_airmass(c), x_lo, x_hi)) /
                      total;
        }
    }

    std::sort(out.begin(), out.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.record.hip_id < b.record.hip_id;
    });
    return out;
}

PairRanking rank_pairs(const std::vector<RankedCandidate>& candidates_a,
                       const std::vector<RankedCandidate>& candidates_b)
{
    PairRanking ranking;
    for (const RankedCandidate& a : candidates_a) {
        for (const RankedCandidate& b : candidates_b) {
            RankedPair pair;
            pair.alice = a;
            pair.bob = b;
            pair.score = 0.5 * (a.score + b.score);
            pair.causally_aligned = a.min_tau_valid_s > 0.0 && b.min_tau_valid_s > 0.0;
            (pair.causally_aligned ? ranking.ranked : ranking.misaligned).push_back(pair);
        }
    }
    const auto order = [](const RankedPair& x, const RankedPair& y) {
        if (x.score != y.score) return x.score > y.score;
        if (x.alice.record.hip_id != y.alice.record.hip_id)
            return x.alice.record.hip_id < y.alice.record.hip_id;
        return x.bob.record.hip_id < y.bob.record.hip_id;
    };
    std::sort(ranking.ranked.begin(), ranking.ranked.end(), order);
    std::sort(ranking.misaligned.begin(), ranking.misaligned.end(), order);
    return ranking;
}

}  // namespace starbell
