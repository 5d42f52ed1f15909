#pragma once

// Cost accounting in exact integer arithmetic.
//
// Prices are held in micro-dollars per billing batch (1000 pages, 1M characters,
// 1M tokens) and usage quantities in milli-units, so fractional averages such as
// "5.0 highlights" stay exact. Every product of the two lands on a whole number of
// 1e-18 USD, which is the internal unit of Usd. Nothing is rounded until display.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slidecast/errors.hpp"
#include "slidecast/providers.hpp"

namespace slidecast {

using i128 = __int128;

namespace detail {
inline constexpr std::int64_t kPow10[] = {1,         10,         100,         1000,         10000,        100000,
                                          1000000,   10000000,   100000000,   1000000000,   10000000000LL};
inline constexpr i128 kAttoPerUsd = static_cast<i128>(1000000000000000000LL);

/// Parses a non-negative decimal string into an integer count of 10^-scale units.
/// Throws ConfigError if the value needs more than `scale` fractional digits.
inline std::int64_t parse_fixed(const std::string& s, int scale, const std::string& field) {
    std::size_t i = 0;
    std::int64_t whole = 0;
    std::int64_t frac = 0;
    int frac_digits = 0;
    bool any = false;
    if (i < s.size() && s[i] == '+') ++i;
    for (; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i) {
        whole = whole * 10 + (s[i] - '0');
        any = true;
        if (whole > 1000000000000LL) throw ConfigError(field + ": value too large");
    }
    if (i < s.size() && s[i] == '.') {
        for (++i; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i) {
            any = true;
            if (frac_digits < scale) {
                frac = frac * 10 + (s[i] - '0');
                ++frac_digits;
            } else if (s[i] != '0') {
                throw ConfigError(field + ": more than " + std::to_string(scale) + " decimal places in '" + s + "'");
            }
        }
    }
    if (!any || i != s.size()) throw ConfigError(field + ": not a non-negative decimal: '" + s + "'");
    return whole * kPow10[scale] + frac * kPow10[scale - frac_digits];
}

inline std::int64_t fixed_from_json(const nlohmann::json& j, int scale, const std::string& field) {
    if (j.is_string()) return parse_fixed(j.get<std::string>(), scale, field);
    if (j.is_number_integer()) {
        if (j.get<long long>() < 0) throw ConfigError(field + ": must be >= 0");
        return j.get<std::int64_t>() * kPow10[scale];
    }
    if (j.is_number()) {
        // Shortest round-trip text of the double, e.g. 1.25 -> "1.25".
        std::string text = j.dump();
        if (text.find_first_of("eE") != std::string::npos) {
            std::ostringstream fixed;
            fixed << std::fixed << std::setprecision(scale) << j.get<double>();
            text = fixed.str();
        }
        if (!text.empty() && text[0] == '-') throw ConfigError(field + ": must be >= 0");
        return parse_fixed(text, scale, field);
    }
    throw ConfigError(field + ": expected a number");
}

inline std::string format_fixed(std::int64_t v, int scale) {
    std::string out = std::to_string(v / kPow10[scale]);
    if (scale > 0) {
        std::string frac = std::to_string(v % kPow10[scale]);
        out += "." + std::string(static_cast<std::size_t>(scale) - frac.size(), '0') + frac;
    }
    return out;
}
}  // namespace detail

/// Exact USD amount, stored in units of 1e-18 USD.
struct Usd {
    i128 atto = 0;

    static Usd from_micros(std::int64_t micros) { return {static_cast<i128>(micros) * 1000000000000LL}; }

    /// Rounded to `decimals` places, half away from zero, as an integer count of 10^-decimals USD.
    std::int64_t rounded(int decimals) const {
        const i128 unit = detail::kAttoPerUsd / detail::kPow10[decimals];
        const i128 mag = atto < 0 ? -atto : atto;
        const i128 q = (mag + unit / 2) / unit;
        return static_cast<std::int64_t>(atto < 0 ? -q : q);
    }
    std::int64_t micros() const { return rounded(6); }
    std::int64_t cents() const { return rounded(2); }
    bool is_exact_at(int decimals) const { return atto % (detail::kAttoPerUsd / detail::kPow10[decimals]) == 0; }
    double to_double() const { return static_cast<double>(atto) / 1e18; }

    /// "$0.47" style text, rounded half up to `decimals` places.
    std::string format(int decimals = 2) const {
        const std::int64_t v = rounded(decimals);
        const std::int64_t mag = v < 0 ? -v : v;
        return std::string(v < 0 ? "-$" : "$") + detail::format_fixed(mag, decimals);
    }

    Usd& operator+=(Usd o) {
        atto += o.atto;
        return *this;
    }
    friend Usd operator+(Usd a, Usd b) { return {a.atto + b.atto}; }
    friend Usd operator*(Usd a, std::int64_t n) { return {a.atto * n}; }
    friend bool operator==(Usd a, Usd b) { return a.atto == b.atto; }
    friend bool operator<(Usd a, Usd b) { return a.atto < b.atto; }
    friend bool operator<=(Usd a, Usd b) { return a.atto <= b.atto; }
};

/// Unit prices in micro-dollars per billing batch.
struct PriceSheet {
    std::int64_t ocr_per_1000_pages = 1500000;
    std::int64_t tts_per_1m_chars = 2500000;
    std::int64_t llm_input_per_1m_tokens = 1250000;
    std::int64_t llm_output_per_1m_tokens = 10000000;

    void validate() const {
        if (ocr_per_1000_pages < 0 || tts_per_1m_chars < 0 || llm_input_per_1m_tokens < 0 ||
            llm_output_per_1m_tokens < 0)
            throw ConfigError("prices must be >= 0");
    }
};

/// Per-slide usage in milli-units (1000 = one page / character / token / highlight).
struct SlideUsage {
    std::int64_t ocr_pages = 1000;
    std::int64_t tts_chars = 600000;
    std::int64_t narration_in_tokens = 2000000;
    std::int64_t narration_out_tokens = 500000;
    std::int64_t highlights = 5000;
    std::int64_t align_in_tokens_per_highlight = 400000;
    std::int64_t align_out_tokens_per_highlight = 50000;

    void validate() const {
        for (auto v : {ocr_pages, tts_chars, narration_in_tokens, narration_out_tokens, highlights,
                       align_in_tokens_per_highlight, align_out_tokens_per_highlight})
            if (v < 0) throw ConfigError("usage quantities must be >= 0");
    }
};

inline void to_json(nlohmann::json& j, const PriceSheet& p) {
    j = {{"ocr_per_1000_pages", detail::format_fixed(p.ocr_per_1000_pages, 6)},
         {"tts_per_1m_chars", detail::format_fixed(p.tts_per_1m_chars, 6)},
         {"llm_input_per_1m_tokens", detail::format_fixed(p.llm_input_per_1m_tokens, 6)},
         {"llm_output_per_1m_tokens", detail::format_fixed(p.llm_output_per_1m_tokens, 6)}};
}

inline void from_json(const nlohmann::json& j, PriceSheet& p) {
    auto field = [&](const char* name, std::int64_t& out) {
        if (j.contains(name)) out = detail::fixed_from_json(j.at(name), 6, name);
    };
    field("ocr_per_1000_pages", p.ocr_per_1000_pages);
    field("tts_per_1m_chars", p.tts_per_1m_chars);
    field("llm_input_per_1m_tokens", p.llm_input_per_1m_tokens);
    field("llm_output_per_1m_tokens", p.llm_output_per_1m_tokens);
    p.validate();
}

inline void to_json(nlohmann::json& j, const SlideUsage& u) {
    j = {{"ocr_pages", detail::format_fixed(u.ocr_pages, 3)},
         {"tts_chars", detail::format_fixed(u.tts_chars, 3)},
         {"narration_in_tokens", detail::format_fixed(u.narration_in_tokens, 3)},
         {"narration_out_tokens", detail::format_fixed(u.narration_out_tokens, 3)},
         {"highlights", detail::format_fixed(u.highlights, 3)},
         {"align_in_tokens_per_highlight", detail::format_fixed(u.align_in_tokens_per_highlight, 3)},
         {"align_out_tokens_per_highlight", detail::format_fixed(u.align_out_tokens_per_highlight, 3)}};
}

inline void from_json(const nlohmann::json& j, SlideUsage& u) {
    auto field = [&](const char* name, std::int64_t& out) {
        if (j.contains(name)) out = detail::fixed_from_json(j.at(name), 3, name);
    };
    field("ocr_pages", u.ocr_pages);
    field("tts_chars", u.tts_chars);
    field("narration_in_tokens", u.narration_in_tokens);
    field("narration_out_tokens", u.narration_out_tokens);
    field("highlights", u.highlights);
    field("align_in_tokens_per_highlight", u.align_in_tokens_per_highlight);
    field("align_out_tokens_per_highlight", u.align_out_tokens_per_highlight);
    u.validate();
}

struct CostBreakdown {
    Usd ocr;
    Usd tts;
    Usd narration;
    Usd alignment;

    Usd total() const { return ocr + tts + narration + alignment; }
    CostBreakdown& operator+=(const CostBreakdown& o) {
        ocr += o.ocr;
        tts += o.tts;
        narration += o.narration;
        alignment += o.alignment;
        return *this;
    }
    friend bool operator==(const CostBreakdown& a, const CostBreakdown& b) {
        return a.ocr == b.ocr && a.tts == b.tts && a.narration == b.narration && a.alignment == b.alignment;
    }
};

namespace detail {
// milli-units x micro-dollars per batch -> 1e-18 USD.
inline Usd priced(std::int64_t milli, std::int64_t price_micro, std::int64_t batch) {
    const i128 per_batch_unit = kAttoPerUsd / (static_cast<i128>(1000) * 1000000 * batch);
    return {static_cast<i128>(milli) * price_micro * per_batch_unit};
}
// highlights (milli) x tokens per highlight (milli) x micro-dollars per 1M tokens.
inline Usd priced_per_highlight(std::int64_t hl_milli, std::int64_t tok_milli, std::int64_t price_micro) {
    return {static_cast<i128>(hl_milli) * tok_milli * price_micro};
}
}  // namespace detail

inline CostBreakdown slide_cost(const SlideUsage& u, const PriceSheet& p) {
    u.validate();
    p.validate();
    CostBreakdown c;
    c.ocr = detail::priced(u.ocr_pages, p.ocr_per_1000_pages, 1000);
    c.tts = detail::priced(u.tts_chars, p.tts_per_1m_chars, 1000000);
    c.narration = detail::priced(u.narration_in_tokens, p.llm_input_per_1m_tokens, 1000000) +
                  detail::priced(u.narration_out_tokens, p.llm_output_per_1m_tokens, 1000000);
    c.alignment = detail::priced_per_highlight(u.highlights, u.align_in_tokens_per_highlight, p.llm_input_per_1m_tokens) +
                  detail::priced_per_highlight(u.highlights, u.align_out_tokens_per_highlight, p.llm_output_per_1m_tokens);
    return c;
}

inline Usd lecture_cost(std::int64_t slides, const SlideUsage& u, const PriceSheet& p) {
    if (slides < 0) throw PreconditionError("slide count must be >= 0");
    return slide_cost(u, p).total() * slides;
}

struct CostShares {
    double ocr = 0;
    double tts = 0;
    double narration = 0;
    double alignment = 0;
};

/// Component shares of the total in percent.
inline CostShares breakdown_report(const CostBreakdown& c) {
    const i128 total = c.total().atto;
    if (total <= 0) throw ZeroTotal();
    auto pct = [&](Usd part) { return static_cast<double>(part.atto) * 100.0 / static_cast<double>(total); };
    return {pct(c.ocr), pct(c.tts), pct(c.narration), pct(c.alignment)};
}

inline CostShares breakdown_report(const SlideUsage& u, const PriceSheet& p) { return breakdown_report(slide_cost(u, p)); }

/// Cost of one metered call. LLM calls with purpose "alignment" count as alignment,
/// every other LLM call as narration.
inline CostBreakdown cost_of_record(const UsageRecord& r, const PriceSheet& p) {
    r.validate();
    CostBreakdown c;
    switch (r.kind) {
        case ProviderKind::ocr:
            c.ocr = detail::priced(r.pages * 1000, p.ocr_per_1000_pages, 1000);
            break;
        case ProviderKind::tts:
            c.tts = detail::priced(r.characters * 1000, p.tts_per_1m_chars, 1000000);
            break;
        case ProviderKind::llm: {
            const Usd v = detail::priced(r.input_tokens * 1000, p.llm_input_per_1m_tokens, 1000000) +
                          detail::priced(r.output_tokens * 1000, p.llm_output_per_1m_tokens, 1000000);
            (r.purpose == "alignment" ? c.alignment : c.narration) = v;
            break;
        }
    }
    return c;
}

/// Cost of a usage log, priced on the summed quantities per component.
inline CostBreakdown cost_of_records(const std::vector<UsageRecord>& records, const PriceSheet& p) {
    std::int64_t pages = 0, chars = 0, n_in = 0, n_out = 0, a_in = 0, a_out = 0;
    for (const auto& r : records) {
        r.validate();
        switch (r.kind) {
            case ProviderKind::ocr: pages += r.pages; break;
            case ProviderKind::tts: chars += r.characters; break;
            case ProviderKind::llm:
                (r.purpose == "alignment" ? a_in : n_in) += r.input_tokens;
                (r.purpose == "alignment" ? a_out : n_out) += r.output_tokens;
                break;
        }
    }
    CostBreakdown c;
    c.ocr = detail::priced(pages * 1000, p.ocr_per_1000_pages, 1000);
    c.tts = detail::priced(chars * 1000, p.tts_per_1m_chars, 1000000);
    c.narration = detail::priced(n_in * 1000, p.llm_input_per_1m_tokens, 1000000) +
                  detail::priced(n_out * 1000, p.llm_output_per_1m_tokens, 1000000);
    c.alignment = detail::priced(a_in * 1000, p.llm_input_per_1m_tokens, 1000000) +
                  detail::priced(a_out * 1000, p.llm_output_per_1m_tokens, 1000000);
    return c;
}

/// Plain-text cost table; amounts shown with `decimals` places, shares to 0.1%.
inline std::string render_cost_table(const CostBreakdown& c, int decimals = 4) {
    std::ostringstream out;
    const bool has_total = c.total().atto > 0;
    const CostShares s = has_total ? breakdown_report(c) : CostShares{};
    auto row = [&](const std::string& name, Usd v, double share) {
        out << std::left << std::setw(12) << name << std::right << std::setw(14) << v.format(decimals);
        if (has_total) out << std::setw(9) << std::fixed << std::setprecision(1) << share << "%";
        out << "\n";
    };
    out << std::left << std::setw(12) << "Component" << std::right << std::setw(14) << "Cost (USD)";
    if (has_total) out << std::setw(10) << "Share";
    out << "\n";
    row("OCR", c.ocr, s.ocr);
    row("TTS", c.tts, s.tts);
    row("Narration", c.narration, s.narration);
    row("Alignment", c.alignment, s.alignment);
    row("Total", c.total(), has_total ? 100.0 : 0.0);
    return out.str();
}

inline nlohmann::json cost_json(const CostBreakdown& c, int decimals = 6) {
    nlohmann::json j{{"ocr", c.ocr.format(decimals)},
                     {"tts", c.tts.format(decimals)},
                     {"narration", c.narration.format(decimals)},
                     {"alignment", c.alignment.format(decimals)},
                     {"total", c.total().format(decimals)}};
    if (c.total().atto > 0) {
        const auto s = breakdown_report(c);
        j["shares_percent"] = {{"ocr", s.ocr}, {"tts", s.tts}, {"narration", s.narration}, {"alignment", s.alignment}};
    }
    return j;
}

}  // namespace slidecast
