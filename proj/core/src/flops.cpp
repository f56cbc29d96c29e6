#include "madf/flops.hpp"

#include <iomanip>
#include <sstream>

namespace madf {

std::uint64_t FlopsReport::total() const {
    std::uint64_t sum = 0;
    for (const auto& c : components) sum += c.multiplies;
    return sum;
}

std::string FlopsReport::table() const {
    std::ostringstream os;
    os << std::left << std::setw(14) << "component" << std::right << std::setw(16)
       << "multiplies" << std::setw(10) << "G" << "\n";
    auto line = [&](const std::string& name, std::uint64_t v) {
        os << std::left << std::setw(14) << name << std::right << std::setw(16) << v
           << std::setw(10) << std::fixed << std::setprecision(2) << (double)v / 1e9 << "\n";
    };
    for (const auto& c : components) line(c.name, c.multiplies);
    line("total", total());
    return os.str();
}

std::string FlopsReport::key_values() const {
    std::ostringstream os;
    for (const auto& c : components) os << "flops." << c.name << "=" << c.multiplies << "\n";
    os << "flops.total=" << total() << "\n";
    return os.str();
}

std::uint64_t conv_multiplies(int nh, int nw, int c_out, int c_in, int k) {
    return static_cast<std::uint64_t>(nh) * nw * c_out * c_in * k * k;
}

FlopsReport count_flops(const ModelConfig& cfg, int h, int w) {
    cfg.validate();
    cfg.validate_input(h, w);
    const int L = cfg.levels;

    std::vector<int> hs(L + 1), ws(L + 1);
    hs[0] = h;
    ws[0] = w;
    for (int l = 1; l <= L; ++l) {
        const ConvSpec sp = cfg.level_spec(l);
        hs[l] = sp.out_dim(hs[l - 1]);
        ws[l] = sp.out_dim(ws[l - 1]);
    }

    FlopsReport report;

    std::uint64_t enc = 0;
    for (int l = 1; l <= L; ++l) {
        const int k = cfg.kernel(l);
        const std::uint64_t n = static_cast<std::uint64_t>(hs[l]) * ws[l];
        enc += conv_multiplies(hs[l], ws[l], cfg.c_m(l), cfg.c_m(l - 1), k);  // mask conv
        enc += n * cfg.c_m(l) * cfg.theta_dim(l);                             // kernel gen 1x1
        enc += conv_multiplies(hs[l], ws[l], cfg.c_e(l), cfg.c_e(l - 1), k);  // dynamic conv
        enc += conv_multiplies(hs[l], ws[l], cfg.c_u(l), cfg.c_e(l), 1);      // channel lift
    }
    enc += conv_multiplies(hs[0], ws[0], cfg.c_u(0), cfg.c_e(0), 1);  // level-0 lift
    report.components.push_back({"encoder", enc});

    const std::uint64_t head = conv_multiplies(hs[0], ws[0], 3, cfg.width(0), 3);

    std::uint64_t rec = 0;
    for (int l = L; l >= 1; --l) {
        // transposed conv: every input cell meets every kernel tap
        rec += static_cast<std::uint64_t>(hs[l]) * ws[l] * cfg.width(l) * cfg.width(l - 1) *
               16;
        rec += conv_multiplies(hs[l - 1], ws[l - 1], cfg.width(l - 1), 2 * cfg.width(l - 1),
                               3);
    }
    rec += head;
    report.components.push_back({"recovery", rec});

    std::uint64_t ref = 0;
    for (int l = L; l >= 1; --l) {
        const int cin = cfg.width(l) + cfg.width(l - 1);
        const int cout = cfg.width(l - 1);
        const std::uint64_t n = static_cast<std::uint64_t>(hs[l - 1]) * ws[l - 1];
        ref += conv_multiplies(hs[l - 1], ws[l - 1], cout, cin, 3);
        if (cfg.pn_enabled) {
            ref += conv_multiplies(hs[l - 1], ws[l - 1], cfg.pn_latent, cout, 3);
            ref += 2 * conv_multiplies(hs[l - 1], ws[l - 1], cout, cfg.pn_latent, 3);
        }
        ref += 2 * n * cout;  // normalize and scale, per output element
    }
    ref += head;
    for (int k = 1; k <= cfg.refinements; ++k)
        report.components.push_back({"refine" + std::to_string(k), ref});

    return report;
}

}  // namespace madf
