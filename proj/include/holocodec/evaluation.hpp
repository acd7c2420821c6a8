#ifndef HOLOCODEC_EVALUATION_HPP
#define HOLOCODEC_EVALUATION_HPP

#include "holocodec/metrics.hpp"
#include "holocodec/transport.hpp"

namespace holocodec {

struct SweepRow {
    std::string image;
    int channel = 0;
    size_t k = 0;
    double bpp_fixed = 0, bpp_entropy = 0, psnr = 0, ssim = 0, msssim = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;          // one per (image, channel, size)
    std::vector<SweepRow> per_size_mean; // aggregated, image = "mean"
    RDCurve curve;                       // (mean entropy bpp, mean psnr) per size
};

inline std::string sweep_to_csv(const SweepResult& r) {
    std::ostringstream os;
    os.precision(10);
    os << "image,channel,K,bpp_fixed,bpp_entropy,psnr,ssim,msssim\n";
    auto emit = [&os](const SweepRow& row) {
        os << row.image << "," << row.channel << "," << row.k << "," << row.bpp_fixed << "," << row.bpp_entropy << ","
           << row.psnr << "," << row.ssim << "," << row.msssim << "\n";
    };
    for (const auto& row : r.rows) emit(row);
    for (const auto& row : r.per_size_mean) emit(row);
    return os.str();
}

// Compresses the corpus at every requested codebook size and measures rate
// and reconstruction quality on the ROI against the target amplitude.
inline SweepResult rd_sweep(const CodecModel& model, const CodebookRegistry& registry,
                            const std::vector<std::pair<std::string, RGrid>>& corpus,
                            const std::vector<size_t>& sizes, const HologramPipeline& pipe, uint8_t channel = 0) {
    if (corpus.empty()) throw ConfigError("rd_sweep: empty corpus");
    if (sizes.empty()) throw ConfigError("rd_sweep: no sizes requested");
    SweepResult result;
    for (size_t k : sizes) {
        if (!registry.contains(book_channel(channel, false), k) || !registry.contains(book_channel(channel, true), k))
            throw RegistryMissError("rd_sweep: no exported codebook of size " + std::to_string(k));
        const Codebook& bb = registry.lookup(book_channel(channel, false), k);
        const Codebook& bt = registry.lookup(book_channel(channel, true), k);

        SweepRow mean;
        mean.image = "mean";
        mean.channel = channel;
        mean.k = k;
        for (const auto& [name, image] : corpus) {
            HoloBitstream s = compress_channel(model, image, channel, bb, bt, pipe);
            PhaseMap phase = decompress_channel(model, s, bb, bt);
            AmplitudeMap recon = reconstruct_amplitude(phase, model.optics);
            AmplitudeMap target = amplitude_from_intensity(image, pipe.gamma);
            RGrid target_roi = crop_center(target.data, recon.data.h, recon.data.w);

            double peak = 0;
            for (double x : target_roi.v) peak = std::max(peak, x);
            if (peak == 0) peak = 1.0;

            SweepRow row;
            row.image = name;
            row.channel = channel;
            row.k = k;
            size_t pixels = image.h * image.w;
            row.bpp_fixed = bpp_fixed_length(s, pixels);
            row.bpp_entropy = bpp(s, pixels);
            row.psnr = std::min(psnr(recon.data, target_roi, peak), kPsnrCap);
            row.ssim = ssim(recon.data, target_roi, peak);
            auto [levels, win] = ag::msssim_geometry(recon.data.h, recon.data.w);
            (void)win;
            row.msssim = ms_ssim(recon.data, target_roi, std::min<size_t>(levels, 5), peak);

            mean.bpp_fixed += row.bpp_fixed;
            mean.bpp_entropy += row.bpp_entropy;
            mean.psnr += row.psnr;
            mean.ssim += row.ssim;
            mean.msssim += row.msssim;
            result.rows.push_back(std::move(row));
        }
        double n = static_cast<double>(corpus.size());
        mean.bpp_fixed /= n;
        mean.bpp_entropy /= n;
        mean.psnr /= n;
        mean.ssim /= n;
        mean.msssim /= n;
        result.curve.points.emplace_back(mean.bpp_entropy, mean.psnr);
        result.per_size_mean.push_back(std::move(mean));
    }
    std::sort(result.curve.points.begin(), result.curve.points.end());
    return result;
}

// Adapts both codebook levels to each power-of-two size and registers them
// for pre-distribution.
inline void export_adapted_books(const CodecModel& model, const std::vector<size_t>& sizes, CodebookRegistry& reg,
                                 uint8_t channel = 0) {
    for (size_t k : sizes) {
        if (!is_pow2(k)) throw ConfigError("exported codebook sizes must be powers of two");
        reg.insert(book_channel(channel, false), k, adapt(model.book_bottom, k, model.adapter_bottom));
        reg.insert(book_channel(channel, true), k, adapt(model.book_top, k, model.adapter_top));
    }
}

}  // namespace holocodec

#endif
