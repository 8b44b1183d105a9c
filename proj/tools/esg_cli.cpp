#include <CLI11.hpp>

#include "esg/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"five-factor economic scenario generator"};
    app.require_subcommand(1);

    esg::cli::CliOptions opts;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "run configuration file")->required();
        sub->add_option("--out-dir", opts.out_dir, "output directory (default .)");
        sub->add_option("--max-paths", opts.max_paths, "cap the configured path count");
        sub->add_option("--threads", opts.threads, "worker threads (0 = auto)");
        return sub;
    };

    auto* validate = add_common(app.add_subcommand("validate", "parse and check a config"));
    validate->add_flag("--dump-loadings", opts.dump_loadings, "print the correlation loadings");

    add_common(app.add_subcommand("simulate", "simulate paths and write CSVs"));
    add_common(app.add_subcommand("price-zcb", "deflated discount-bond prices vs closed form"));

    auto* put = add_common(app.add_subcommand("price-put", "deflated European put"));
    put->add_flag("--kim", opts.kim, "print the closed-form reference price");

    auto* cb = add_common(app.add_subcommand("price-cb", "defaultable coupon bond vs closed form"));
    cb->add_option("--calibrate-target", opts.calibrate_target,
                   "solve the coupon for this price on a loss grid");

    auto* conv = add_common(app.add_subcommand("converge", "path-count convergence ladder"));
    conv->add_option("--instrument", opts.instrument, "zcb or cb");
    conv->add_option("--ladder-start", opts.ladder_start, "first ladder size (default 2500)");

    auto* asy = add_common(app.add_subcommand("asymptotics", "long-horizon moments vs closed form"));
    asy->add_option("--horizon", opts.horizon, "simulation horizon in years (default 500)");
    asy->add_option("--asy-dt", opts.asy_dt, "time step (default 0.05)");
    asy->add_option("--asy-paths", opts.asy_paths, "path count (default 10000)");

    add_common(app.add_subcommand("portfolio", "plain vs antithetic portfolio histogram"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    opts.command = app.get_subcommands().front()->get_name();
    return esg::cli::dispatch(opts);
}
