#include "derainsplat/pipeline/report.hpp"

#include "derainsplat/common/error.hpp"
#include "derainsplat/loss/loss.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace drs::pipeline {

using nlohmann::json;

Metrics evaluate_renders(const std::string& scene, const std::vector<Tensor>& renders,
                         const std::vector<Tensor>& clean) {
    if (renders.size() != clean.size() || renders.empty())
        throw ValidationError("evaluate: need one clean image per render");
    Metrics m;
    m.scene = scene;
    for (std::size_t k = 0; k < renders.size(); ++k) {
        if (renders[k].shape() != clean[k].shape())
            throw DimensionError("evaluate: view " + std::to_string(k) + " render " + ad::shape_str(renders[k].shape()) +
                                 " vs clean " + ad::shape_str(clean[k].shape()));
        ViewMetrics v{k, loss::psnr(renders[k], clean[k]), loss::ssim(renders[k], clean[k])};
        m.mean_psnr += v.psnr;
        m.mean_ssim += v.ssim;
        m.views.push_back(v);
    }
    m.mean_psnr /= static_cast<double>(m.views.size());
    m.mean_ssim /= static_cast<double>(m.views.size());
    return m;
}

json metrics_to_json(const Metrics& m) {
    json views = json::array();
    for (const auto& v : m.views)
        views.push_back({{"view_index", v.view_index}, {"psnr", v.psnr}, {"ssim", v.ssim}, {"lpips", "n/a"}});
    return {{"schema", kMetricsSchema},
            {"scene", m.scene},
            {"views", views},
            {"mean", {{"psnr", m.mean_psnr}, {"ssim", m.mean_ssim}, {"lpips", "n/a"}}}};
}

namespace {

void check_scores(const json& e, const std::string& where) {
    if (!e.is_object()) throw ValidationError("metrics: " + where + " must be an object");
    for (const char* key : {"psnr", "ssim"}) {
        if (!e.contains(key) || !e.at(key).is_number())
            throw ValidationError("metrics: " + where + "." + key + " must be a number");
    }
    const double p = e.at("psnr"), s = e.at("ssim");
    if (!std::isfinite(p) || p < 0.0 || p > loss::kPsnrCap)
        throw ValidationError("metrics: " + where + ".psnr out of range");
    if (!std::isfinite(s) || s < -1.0 || s > 1.0) throw ValidationError("metrics: " + where + ".ssim out of range");
    if (!e.contains("lpips") || e.at("lpips") != "n/a")
        throw ValidationError("metrics: " + where + ".lpips must be \"n/a\"");
    for (auto it = e.begin(); it != e.end(); ++it)
        if (it.key() != "psnr" && it.key() != "ssim" && it.key() != "lpips" &&
            (it.key() != "view_index" || where == "mean"))
            throw ValidationError("metrics: unexpected key '" + where + "." + it.key() + "'");
}

}  // namespace

void validate_metrics_json(const json& j) {
    if (!j.is_object()) throw ValidationError("metrics: top level must be an object");
    if (j.value("schema", "") != kMetricsSchema) throw ValidationError("metrics: schema must be " + std::string(kMetricsSchema));
    if (!j.contains("scene") || !j.at("scene").is_string()) throw ValidationError("metrics: scene must be a string");
    if (!j.contains("views") || !j.at("views").is_array() || j.at("views").empty())
        throw ValidationError("metrics: views must be a non-empty array");
    for (std::size_t i = 0; i < j.at("views").size(); ++i) {
        const json& v = j.at("views")[i];
        const std::string where = "views[" + std::to_string(i) + "]";
        check_scores(v, where);
        if (!v.contains("view_index") || !v.at("view_index").is_number_unsigned() || v.at("view_index") != i)
            throw ValidationError("metrics: " + where + ".view_index must equal its position");
    }
    if (!j.contains("mean")) throw ValidationError("metrics: mean is missing");
    check_scores(j.at("mean"), "mean");
    for (const char* key : {"psnr", "ssim"}) {
        double sum = 0.0;
        for (const auto& v : j.at("views")) sum += v.at(key).get<double>();
        const double mean = sum / static_cast<double>(j.at("views").size());
        if (std::fabs(mean - j.at("mean").at(key).get<double>()) > 1e-9 * std::max(1.0, std::fabs(mean)))
            throw ValidationError(std::string("metrics: mean.") + key + " is not the mean of the views");
    }
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "schema" && it.key() != "scene" && it.key() != "views" && it.key() != "mean")
            throw ValidationError("metrics: unexpected key '" + it.key() + "'");
}

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& history) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open '" + path + "' for writing");
    os << "iteration,view,total,l_c,l_reg,mask_mean\n" << std::setprecision(17);
    for (const auto& r : history)
        os << r.iteration << ',' << r.view << ',' << r.total << ',' << r.l_c << ',' << r.l_reg << ',' << r.mask_mean
           << '\n';
}

Tensor comparison_grid(const std::vector<std::vector<Tensor>>& rows) {
    constexpr std::size_t gap = 2;
    if (rows.empty() || rows.front().empty()) throw ValidationError("comparison_grid: nothing to show");
    const Tensor& first = rows.front().front();
    if (first.rank() != 3) throw DimensionError("comparison_grid: images must be [C,H,W]");
    const std::size_t h = first.size(1), w = first.size(2);
    std::size_t cols = 0;
    for (const auto& r : rows) cols = std::max(cols, r.size());
    const std::size_t gh = rows.size() * (h + gap) + gap, gw = cols * (w + gap) + gap;
    Tensor grid(ad::Shape{3, gh, gw}, 1.0);
    auto g = grid.mutable_values();
    for (std::size_t ri = 0; ri < rows.size(); ++ri)
        for (std::size_t ci = 0; ci < rows[ri].size(); ++ci) {
            const Tensor& img = rows[ri][ci];
            if (img.rank() != 3 || img.size(1) != h || img.size(2) != w || (img.size(0) != 3 && img.size(0) != 1))
                throw DimensionError("comparison_grid: image " + ad::shape_str(img.shape()) + " does not match " +
                                     ad::shape_str(first.shape()));
            const std::size_t y0 = gap + ri * (h + gap), x0 = gap + ci * (w + gap);
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x = 0; x < w; ++x)
                        g[(c * gh + y0 + y) * gw + x0 + x] = img[((img.size(0) == 3 ? c : 0) * h + y) * w + x];
        }
    return grid;
}

}  // namespace drs::pipeline
