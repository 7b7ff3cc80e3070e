#include "spn/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "spn/errors.hpp"
#include "spn/nn_util.hpp"

namespace spn {

namespace {

struct Aggregate {
    std::string label;
    std::vector<std::string> members;
};

std::vector<Aggregate> report_groups() {
    const auto& b = canonical_buckets();
    std::vector<Aggregate> groups;
    for (const auto& bucket : b) groups.push_back({bucket.label, {bucket.label}});
    groups.push_back({"0-20%", {b[0].label, b[1].label}});
    groups.push_back({"20-40%", {b[2].label, b[3].label}});
    groups.push_back({"40-60%", {b[4].label, b[5].label}});
    std::vector<std::string> all;
    for (const auto& bucket : b) all.push_back(bucket.label);
    groups.push_back({"All", all});
    return groups;
}

std::string fmt(double v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(6) << v;
    return out.str();
}

} // namespace

uint64_t eval_sample_seed(uint64_t seed, std::size_t pair_index, std::size_t sample_index) {
    return sample_seed(sample_seed(seed, pair_index), sample_index);
}

const MetricRow& MetricReport::row(const std::string& label) const {
    for (const auto& r : rows)
        if (r.label == label) return r;
    throw ContractError("no report row '" + label + "'");
}

std::string MetricReport::to_table() const {
    std::ostringstream out;
    out << "bucket\tcount\tSSIM\tPSNR\tPSNR_masked\tMAE\tFID\n";
    for (const auto& r : rows) {
        out << r.label << '\t' << r.count << '\t';
        if (r.count == 0) {
            out << "-\t-\t-\t-\t-\n";
            continue;
        }
        out << fmt(r.ssim) << '\t' << fmt(r.psnr) << '\t' << fmt(r.psnr_masked) << '\t' << fmt(r.mae) << '\t'
            << (r.fid ? fmt(*r.fid) : "-") << '\n';
    }
    return out.str();
}

std::string MetricReport::to_key_values() const {
    std::ostringstream out;
    out << "k = " << k << "\n"
        << "composited = " << (composited ? "true" : "false") << "\n"
        << "seed = " << seed << "\n"
        << "model = " << model << "\n"
        << "embedding = " << embedding << "\n"
        << "pairs = " << pairs.size() << "\n";
    for (std::size_t i = 0; i < warnings.size(); ++i) out << "warning." << i << " = " << warnings[i] << "\n";
    for (const auto& r : rows) {
        const auto prefix = "row." + r.label + ".";
        out << prefix << "count = " << r.count << "\n";
        if (r.count == 0) continue;
        out << prefix << "ssim = " << fmt(r.ssim) << "\n"
            << prefix << "psnr = " << fmt(r.psnr) << "\n"
            << prefix << "psnr_masked = " << fmt(r.psnr_masked) << "\n"
            << prefix << "mae = " << fmt(r.mae) << "\n";
        if (r.fid) out << prefix << "fid = " << fmt(*r.fid) << "\n";
    }
    return out.str();
}

void MetricReport::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "report.tsv") << to_table();
    std::ofstream(dir / "report.txt") << to_key_values();
    std::ofstream pairs_out(dir / "pairs.tsv");
    pairs_out << "id\tbucket\tbest\tpsnr\tsample_seeds\tsample_psnr\n";
    for (const auto& p : pairs) {
        pairs_out << p.id << '\t' << p.bucket << '\t' << p.best << '\t' << fmt(p.psnr) << '\t';
        for (std::size_t j = 0; j < p.seeds.size(); ++j) pairs_out << (j ? "," : "") << p.seeds[j];
        pairs_out << '\t';
        for (std::size_t j = 0; j < p.sample_psnr.size(); ++j) pairs_out << (j ? "," : "") << fmt(p.sample_psnr[j]);
        pairs_out << '\n';
    }
    if (!pairs_out) throw Error("cannot write evaluation report to " + dir.string());
}

MetricReport evaluate(const Inpainter& model, const std::vector<SamplePair>& pairs, const EvalOptions& options) {
    if (pairs.empty()) throw ContractError("evaluation needs at least one pair");
    MetricReport report;
    report.composited = options.composited;
    report.seed = options.seed;
    report.model = model.identity();
    report.embedding = options.embedding ? options.embedding->tag() : "none";
    const bool probabilistic = model.mode() == Mode::Probabilistic;
    report.k = options.k > 0 ? options.k : (probabilistic ? 5 : 1);
    if (!probabilistic && report.k > 1) {
        report.warnings.push_back("k=" + std::to_string(report.k) + " requested for a deterministic model; using k=1");
        report.k = 1;
    }

    std::vector<torch::Tensor> real_embed, fake_embed;
    const std::size_t chunk = static_cast<std::size_t>(std::max<int64_t>(1, options.batch_size));
    for (std::size_t start = 0; start < pairs.size(); start += chunk) {
        const std::size_t end = std::min(pairs.size(), start + chunk);
        std::vector<SamplePair> slice(pairs.begin() + static_cast<std::ptrdiff_t>(start),
                                      pairs.begin() + static_cast<std::ptrdiff_t>(end));
        const auto batch = collate(slice);
        const auto real_unit = to_unit(batch.images);

        std::vector<PairResult> results(slice.size());
        torch::Tensor best_images = torch::empty_like(batch.images);
        for (std::size_t i = 0; i < slice.size(); ++i) {
            results[i].id = slice[i].id;
            results[i].bucket = bucket_of(slice[i].mask).label;
        }
        for (int64_t j = 0; j < report.k; ++j) {
            std::vector<uint64_t> seeds;
            for (std::size_t i = 0; i < slice.size(); ++i)
                seeds.push_back(eval_sample_seed(options.seed, start + i, static_cast<std::size_t>(j)));
            auto out = model.inpaint(batch.images, batch.masks, seeds).to(torch::kFloat32);
            if (options.composited) out = composite(out, batch.images, batch.masks);
            for (std::size_t i = 0; i < slice.size(); ++i) {
                const auto idx = static_cast<int64_t>(i);
                const double score = psnr(real_unit[idx], to_unit(out[idx]));
                auto& r = results[i];
                r.seeds.push_back(seeds[i]);
                r.sample_psnr.push_back(score);
                if (j == 0 || score > r.sample_psnr[r.best]) {
                    r.best = static_cast<std::size_t>(j);
                    best_images[idx].copy_(out[idx]);
                }
            }
        }
        for (std::size_t i = 0; i < slice.size(); ++i) {
            const auto idx = static_cast<int64_t>(i);
            auto& r = results[i];
            const auto fake_unit = to_unit(best_images[idx]);
            r.psnr = r.sample_psnr[r.best];
            r.psnr_masked = psnr_masked(real_unit[idx], fake_unit, batch.masks[idx]);
            r.ssim = ssim(real_unit[idx], fake_unit);
            r.mae = mae(real_unit[idx], fake_unit);
            report.pairs.push_back(std::move(r));
        }
        if (options.embedding) {
            real_embed.push_back(options.embedding->embed(batch.images));
            fake_embed.push_back(options.embedding->embed(best_images));
        }
    }
    torch::Tensor real_all, fake_all;
    if (options.embedding) {
        real_all = torch::cat(real_embed, 0);
        fake_all = torch::cat(fake_embed, 0);
    }

    for (const auto& group : report_groups()) {
        MetricRow row;
        row.label = group.label;
        std::vector<int64_t> members;
        for (std::size_t i = 0; i < report.pairs.size(); ++i) {
            const auto& p = report.pairs[i];
            if (std::find(group.members.begin(), group.members.end(), p.bucket) == group.members.end()) continue;
            members.push_back(static_cast<int64_t>(i));
            row.ssim += p.ssim;
            row.psnr += p.psnr;
            row.psnr_masked += p.psnr_masked;
            row.mae += p.mae;
        }
        row.count = static_cast<int64_t>(members.size());
        if (row.count > 0) {
            const double n = static_cast<double>(row.count);
            row.ssim /= n;
            row.psnr /= n;
            row.psnr_masked /= n;
            row.mae /= n;
        }
        if (options.embedding && row.count >= 2) {
            const auto index = torch::tensor(members, torch::kInt64);
            const auto result = fid_detail(real_all.index_select(0, index), fake_all.index_select(0, index));
            row.fid = result.value;
            if (result.regularized && group.label == "All")
                report.warnings.push_back("FID covariance regularized: fewer pairs than embedding_dim + 1");
        }
        report.rows.push_back(row);
    }
    return report;
}

} // namespace spn
