#include "cdfuse/cdfuse.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

namespace fs = std::filesystem;
using namespace cdfuse;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitShape = 3;

void banner(const std::string& sub, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::cout << "cdfuse " << sub;
    for (const auto& [k, v] : kv) std::cout << " " << k << "=" << v;
    std::cout << "\n";
}

int max_threads() {
    if (const char* env = std::getenv("CDFUSE_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

struct PairEntry {
    std::string stem;
    fs::path a, b;
};

std::vector<PairEntry> scan_pairs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw io_error("not a directory: " + dir);
    std::vector<PairEntry> pairs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string stem = entry.path().stem().string();
        if (stem.size() < 2 || stem.substr(stem.size() - 2) != "_a") continue;
        const std::string base = stem.substr(0, stem.size() - 2);
        fs::path bpath = entry.path();
        bpath.replace_filename(base + "_b" + entry.path().extension().string());
        if (fs::exists(bpath)) pairs.push_back({base, entry.path(), bpath});
    }
    std::sort(pairs.begin(), pairs.end(),
              [](const PairEntry& l, const PairEntry& r) { return l.stem < r.stem; });
    return pairs;
}

Tensor luminance_of(const fs::path& p) { return rgb_to_ycbcr(decode_image(p.string())).y; }

ImageRGB fuse_pair(const ModelParams& model, const ImageRGB& a, const ImageRGB& b, bool gray_a,
                   bool gray_b) {
    const ImageYCbCr ya = rgb_to_ycbcr(a);
    const ImageYCbCr yb = rgb_to_ycbcr(b);
    if (ya.y.dim(1) != yb.y.dim(1) || ya.y.dim(2) != yb.y.dim(2))
        throw dimension_error("source images have different spatial extents");
    ImageYCbCr fused;
    fused.y = fuse_luminance(model, ya.y, yb.y);
    // A grayscale (e.g. infrared) source contributes neutral chroma.
    const Tensor neutral = Tensor::full(ya.cb.shape(), 0.5);
    fused.cb = fuse_chrominance(gray_a ? neutral : ya.cb, gray_b ? neutral : yb.cb);
    fused.cr = fuse_chrominance(gray_a ? neutral : ya.cr, gray_b ? neutral : yb.cr);
    return ycbcr_to_rgb(fused);
}

std::vector<std::pair<Tensor, Tensor>> load_dataset(const std::string& dir) {
    std::vector<std::pair<Tensor, Tensor>> pairs;
    for (const auto& e : scan_pairs(dir)) pairs.emplace_back(luminance_of(e.a), luminance_of(e.b));
    if (pairs.empty()) throw io_error("no <stem>_a/<stem>_b image pairs found in " + dir);
    return pairs;
}

int run_fuse(const std::string& model_path, const std::string& a_path, const std::string& b_path,
             const std::string& out_path, bool gray_a, bool gray_b) {
    const ModelParams model = load_model(model_path);
    const ImageRGB a = decode_image(a_path);
    const ImageRGB b = decode_image(b_path);
    // Auto-route grayscale (e.g. infrared) sources when only one side is gray.
    const bool ga = gray_a || (is_grayscale(a) && !is_grayscale(b));
    const bool gb = gray_b || (is_grayscale(b) && !is_grayscale(a));
    const ImageRGB fused = fuse_pair(model, a, b, ga, gb);
    encode_image(fused, out_path);
    return 0;
}

int run_eval(const std::string& model_path, const std::string& data_dir,
             const std::string& out_csv) {
    const ModelParams model = load_model(model_path);
    const auto entries = scan_pairs(data_dir);
    if (entries.empty()) throw io_error("no image pairs found in " + data_dir);

    std::vector<MetricReport> reports(entries.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= entries.size()) return;
            const Tensor a = luminance_of(entries[i].a);
            const Tensor b = luminance_of(entries[i].b);
            const Tensor f = fuse_luminance(model, a, b);
            reports[i] = evaluate_fusion(f, a, b);
        }
    };
    const int nthreads = std::min<int>(max_threads(), static_cast<int>(entries.size()));
    std::vector<std::thread> threads;
    for (int t = 1; t < nthreads; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();

    std::ofstream os(out_csv);
    if (!os) throw io_error("cannot open for writing: " + out_csv);
    os << "pair,mse,psnr,ssim,cc,nabf\n";
    MetricReport total;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const MetricReport& r = reports[i];
        os << entries[i].stem << "," << r.mse << "," << r.psnr << "," << r.ssim << "," << r.cc
           << "," << r.nabf << "\n";
        total.mse += r.mse;
        total.psnr += r.psnr;
        total.ssim += r.ssim;
        total.cc += r.cc;
        total.nabf += r.nabf;
    }
    const double n = static_cast<double>(entries.size());
    os << "mean," << total.mse / n << "," << total.psnr / n << "," << total.ssim / n << ","
       << total.cc / n << "," << total.nabf / n << "\n";
    std::cout << "wrote " << out_csv << " (" << entries.size() << " pairs)\n";
    return 0;
}

double median_ms(const std::vector<double>& v) {
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

int run_bench(const std::string& mode, int size, std::uint64_t seed) {
    const ModelConfig cfg;
    const ModelParams model = init_model(cfg, seed);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    Tensor x({1, size, size}), y({1, size, size});
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = dist(rng);
        y[i] = dist(rng);
    }

    std::cout << "mode,params,median_ms,block_mults\n";
    auto bench_one = [&](const std::string& name, auto&& fn) {
        for (int i = 0; i < 5; ++i) fn(nullptr);
        std::vector<double> times;
        for (int i = 0; i < 20; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            fn(nullptr);
            const auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        MultCounter ctr;
        fn(&ctr);
        std::cout << name << "," << parameter_count(cfg) << "," << median_ms(times) << ","
                  << ctr.mults << "\n";
    };
    if (mode == "unified" || mode == "both")
        bench_one("unified", [&](MultCounter* c) { return fuse_luminance(model, x, y, c); });
    if (mode == "alternating" || mode == "both")
        bench_one("alternating", [&](MultCounter* c) { return fuse_alternating(model, x, y, c); });
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CDNet combined-dictionary image fusion"};
    app.require_subcommand(1);

    // fuse
    auto* fuse = app.add_subcommand("fuse", "Fuse two source images");
    std::string model_path, a_path, b_path, out_path;
    bool gray_a = false, gray_b = false;
    fuse->add_option("--model", model_path, "model file (.cdn)")->required();
    fuse->add_option("-a", a_path, "first source image")->required();
    fuse->add_option("-b", b_path, "second source image")->required();
    fuse->add_option("-o", out_path, "output image")->required();
    fuse->add_flag("--gray-a", gray_a, "treat source a as single-channel (neutral chroma)");
    fuse->add_flag("--gray-b", gray_b, "treat source b as single-channel (neutral chroma)");
    fuse->set_config("--config");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train on paired images");
    std::string data_dir, history_csv = "";
    TrainConfig tcfg;
    ModelConfig mcfg;
    train_cmd->add_option("--data", data_dir, "dataset directory (<stem>_a/<stem>_b pairs)")->required();
    train_cmd->add_option("--epochs", tcfg.epochs, "epochs")->capture_default_str();
    train_cmd->add_option("--lr", tcfg.learning_rate, "learning rate")->capture_default_str();
    train_cmd->add_option("--batch", tcfg.batch_size, "batch size")->capture_default_str();
    train_cmd->add_option("--tau", tcfg.tau, "adaptive-weight scaling factor")->capture_default_str();
    train_cmd->add_option("--seed", tcfg.seed, "RNG seed")->capture_default_str();
    train_cmd->add_option("--crop", tcfg.crop, "training crop size (0 = full images)")->capture_default_str();
    train_cmd->add_option("--blocks", mcfg.T, "CDBlock count")->capture_default_str();
    train_cmd->add_option("--channels", mcfg.C, "channel count")->capture_default_str();
    train_cmd->add_option("--kernel", mcfg.s, "dictionary kernel size")->capture_default_str();
    train_cmd->add_option("-o", out_path, "output model file")->required();
    train_cmd->add_option("--history", history_csv, "loss-history CSV path");
    train_cmd->set_config("--config");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate fusion metrics over a dataset");
    std::string eval_csv;
    eval_cmd->add_option("--model", model_path, "model file (.cdn)")->required();
    eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
    eval_cmd->add_option("-o", eval_csv, "output CSV")->required();
    eval_cmd->set_config("--config");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Benchmark unified vs alternating updates");
    std::string bench_mode = "both";
    int bench_size = 256;
    std::uint64_t bench_seed = 0;
    bench_cmd->add_option("--mode", bench_mode, "unified|alternating|both")
        ->check(CLI::IsMember({"unified", "alternating", "both"}))
        ->capture_default_str();
    bench_cmd->add_option("--size", bench_size, "spatial extent")->check(CLI::PositiveNumber)->capture_default_str();
    bench_cmd->add_option("--seed", bench_seed, "RNG seed")->capture_default_str();
    bench_cmd->set_config("--config");

    // cost
    auto* cost_cmd = app.add_subcommand("cost", "Analytic cost model");
    int cN = 0, cs = 3, cc_ = 5, ch = 256, cw = 256;
    cost_cmd->add_option("--n", cN, "number of source modalities")->required()->check(CLI::PositiveNumber);
    cost_cmd->add_option("--s", cs, "kernel size")->capture_default_str();
    cost_cmd->add_option("--c", cc_, "channel count")->capture_default_str();
    cost_cmd->add_option("--height", ch, "image height")->capture_default_str();
    cost_cmd->add_option("--width", cw, "image width")->capture_default_str();
    cost_cmd->set_config("--config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (fuse->parsed()) {
            banner("fuse", {{"model", model_path}, {"a", a_path}, {"b", b_path}, {"o", out_path},
                            {"gray-a", gray_a ? "1" : "0"}, {"gray-b", gray_b ? "1" : "0"}});
            return run_fuse(model_path, a_path, b_path, out_path, gray_a, gray_b);
        }
        if (train_cmd->parsed()) {
            banner("train", {{"data", data_dir}, {"epochs", std::to_string(tcfg.epochs)},
                             {"lr", std::to_string(tcfg.learning_rate)},
                             {"batch", std::to_string(tcfg.batch_size)},
                             {"tau", std::to_string(tcfg.tau)},
                             {"seed", std::to_string(tcfg.seed)},
                             {"crop", std::to_string(tcfg.crop)}, {"o", out_path}});
            const auto pairs = load_dataset(data_dir);
            TrainResult res = cdfuse::train(mcfg, tcfg, pairs);
            for (const auto& st : res.history)
                std::cout << "epoch " << st.epoch << " mean_hif " << st.mean_hif << " mean_lif "
                          << st.mean_lif << " mean_total " << st.mean_total << "\n";
            save_model(res.params, out_path);
            if (!history_csv.empty()) {
                std::ofstream os(history_csv);
                if (!os) throw io_error("cannot open for writing: " + history_csv);
                os << "epoch,mean_hif,mean_lif,mean_total\n";
                for (const auto& st : res.history)
                    os << st.epoch << "," << st.mean_hif << "," << st.mean_lif << ","
                       << st.mean_total << "\n";
            }
            std::cout << "wrote " << out_path << " (" << res.adam_steps << " adam steps)\n";
            return 0;
        }
        if (eval_cmd->parsed()) {
            banner("eval", {{"model", model_path}, {"data", data_dir}, {"o", eval_csv}});
            return run_eval(model_path, data_dir, eval_csv);
        }
        if (bench_cmd->parsed()) {
            banner("bench", {{"mode", bench_mode}, {"size", std::to_string(bench_size)},
                             {"seed", std::to_string(bench_seed)}});
            return run_bench(bench_mode, bench_size, bench_seed);
        }
        if (cost_cmd->parsed()) {
            banner("cost", {{"n", std::to_string(cN)}, {"s", std::to_string(cs)},
                            {"c", std::to_string(cc_)}, {"h", std::to_string(ch)},
                            {"w", std::to_string(cw)}});
            const CostReport r = cost_report(cN, cs, cc_, ch, cw);
            std::cout << cost_report_text(r) << "\n" << cost_report_csv(r);
            return 0;
        }
    } catch (const dimension_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitShape;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
