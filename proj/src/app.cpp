#include "cafe/app.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "cafe/error.hpp"
#include "cafe/prompts.hpp"

namespace cafe::app {

using ojson = nlohmann::ordered_json;
using model::TraceKey;

std::string_view version() { return "0.1.0"; }

double round6(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return std::strtod(buf, nullptr);
}

nlohmann::ordered_json RunSummary::to_json() const {
    return {{"total", total},     {"written", written},         {"skipped", skipped},
            {"flagged", flagged}, {"judge_calls", judge_calls}, {"threshold_exceeded", threshold_exceeded}};
}

std::shared_ptr<judge::Judge> make_judge(const JudgeConfig& cfg) {
    if (cfg.mock_policy) {
        auto policy = judge::parse_mock_policy(*cfg.mock_policy);
        if (!policy) throw Error(ErrorCode::invalid_argument, "unknown mock policy " + *cfg.mock_policy);
        std::map<std::string, std::string> fixtures;
        if (cfg.fixture) fixtures = judge::MockJudge::load_fixtures(*cfg.fixture);
        else if (*policy == judge::MockPolicy::echo_fixture)
            throw Error(ErrorCode::invalid_argument, "echo_fixture mock needs a fixture file");
        return std::make_shared<judge::MockJudge>(cfg.seed, *policy, std::move(fixtures));
    }
    auto endpoint = judge::JudgeEndpoint::from_environment();
    if (cfg.endpoint) endpoint.base_url = *cfg.endpoint;
    if (endpoint.base_url.empty())
        throw Error(ErrorCode::invalid_argument,
                    "no judge configured: pass --judge-endpoint, set JUDGE_BASE_URL, or use --mock");
    endpoint.model_name = cfg.model;
    endpoint.timeout_s = cfg.timeout_s;
    endpoint.max_retries = cfg.retries;
    return std::make_shared<judge::HttpJudge>(endpoint);
}

judge::GatewayOptions gateway_options(const JudgeConfig& cfg) {
    if (cfg.max_inflight < 1) throw Error(ErrorCode::invalid_argument, "max-inflight must be >= 1");
    judge::GatewayOptions o;
    o.max_inflight = cfg.max_inflight;
    o.snap_scores = cfg.snap_scores;
    return o;
}

bool judge_flagged(const std::vector<std::string>& flags) {
    return std::any_of(flags.begin(), flags.end(), [](const std::string& f) {
        return f.size() > 12 && f.compare(f.size() - 12, 12, "_unavailable") == 0;
    });
}

namespace {

void merge_into(ojson& dst, const ojson& src) {
    for (auto it = src.begin(); it != src.end(); ++it) dst[it.key()] = *it;
}

std::uint64_t judge_calls(const judge::Judge& j) {
    if (auto* m = dynamic_cast<const judge::MockJudge*>(&j)) return m->calls();
    if (auto* h = dynamic_cast<const judge::HttpJudge*>(&j)) return h->attempts();
    return 0;
}

TraceKey record_key(const nlohmann::json& j) {
    return {j.at("sample_id").get<std::string>(), j.at("model_id").get<std::string>(),
            j.at("run_index").get<std::int64_t>()};
}

std::vector<std::string> record_flags(const nlohmann::json& j) {
    auto it = j.find("flags");
    if (it == j.end() || !it->is_array()) return {};
    return it->get<std::vector<std::string>>();
}

// Completed, unflagged records of an earlier run of the same command.
std::map<TraceKey, ojson> load_completed(const fs::path& out) {
    std::map<TraceKey, ojson> done;
    std::ifstream in(out, std::ios::binary);
    if (!in) return done;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        ojson j;
        try {
            j = ojson::parse(line);
            if (judge_flagged(record_flags(j))) continue;
            auto key = record_key(j);
            done.insert_or_assign(std::move(key), std::move(j));
        } catch (const std::exception&) {
            continue;  // partial line from an interrupted run
        }
    }
    return done;
}

void write_jsonl_atomic(const fs::path& out, const std::vector<ojson>& records) {
    fs::path tmp = out;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error(ErrorCode::io, "cannot write " + tmp.string());
        for (const auto& r : records) f << r.dump() << '\n';
        if (!f) throw Error(ErrorCode::io, "write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, out, ec);
    if (ec) throw Error(ErrorCode::io, "cannot replace " + out.string() + ": " + ec.message());
}

std::map<std::string, model::AudioQASample> index_dataset(const fs::path& path) {
    std::map<std::string, model::AudioQASample> by_id;
    for (auto& s : model::load_dataset(path)) {
        auto id = s.id;
        by_id.emplace(std::move(id), std::move(s));
    }
    return by_id;
}

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) out += (out.empty() ? "" : ", ") + id;
    return out;
}

void require_joined(const std::vector<model::TraceRecord>& traces,
                    const std::map<std::string, model::AudioQASample>& dataset) {
    std::set<std::string> missing;
    for (const auto& t : traces)
        if (!dataset.count(t.sample_id)) missing.insert(t.sample_id);
    if (!missing.empty())
        throw Error(ErrorCode::not_found, "dataset missing sample_id(s): " +
                                              join_ids({missing.begin(), missing.end()}));
}

/// Runs `work(i)` for i in [0, count) on up to `workers` threads.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& work) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto loop = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
            try {
                work(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = count;
            }
        }
    };
    std::vector<std::thread> pool;
    std::size_t n = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(loop);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Shared driver of the resumable per-trace commands.
RunSummary run_resumable(const BatchOptions& o,
                         const std::function<ojson(const model::TraceRecord&, const model::AudioQASample&,
                                                   judge::JudgeGateway&)>& produce) {
    auto dataset = index_dataset(o.dataset);
    auto traces = model::load_traces(o.traces);
    require_joined(traces, dataset);
    if (o.max_flagged_frac < 0.0 || o.max_flagged_frac > 1.0)
        throw Error(ErrorCode::invalid_argument, "max-flagged-frac must be in [0, 1]");

    auto judge = make_judge(o.judge);
    judge::JudgeGateway gateway(judge, gateway_options(o.judge));

    RunSummary summary;
    summary.total = traces.size();
    auto results = load_completed(o.out);
    std::vector<const model::TraceRecord*> pending;
    for (const auto& t : traces) {
        if (results.count(model::key_of(t))) ++summary.skipped;
        else pending.push_back(&t);
    }

    {
        // Drop flagged records and partial lines before appending.
        std::vector<ojson> kept;
        for (auto& [k, r] : results) kept.push_back(r);
        write_jsonl_atomic(o.out, kept);
    }
    std::ofstream append(o.out, std::ios::binary | std::ios::app);
    if (!append) throw Error(ErrorCode::io, "cannot append to " + o.out.string());
    std::mutex out_mutex;

    parallel_for(pending.size(), o.judge.max_inflight, [&](std::size_t i) {
        const auto& t = *pending[i];
        ojson record = produce(t, dataset.at(t.sample_id), gateway);
        std::lock_guard lock(out_mutex);
        append << record.dump() << '\n';
        append.flush();
        results[model::key_of(t)] = std::move(record);
        ++summary.written;
    });
    append.close();

    std::vector<ojson> final_records;
    std::set<TraceKey> wanted;
    for (const auto& t : traces) wanted.insert(model::key_of(t));
    for (auto& [k, r] : results) {
        if (!wanted.count(k)) continue;
        if (judge_flagged(record_flags(r))) ++summary.flagged;
        final_records.push_back(std::move(r));
    }
    write_jsonl_atomic(o.out, final_records);

    summary.judge_calls = judge_calls(*judge);
    if (summary.total > 0)
        summary.threshold_exceeded =
            static_cast<double>(summary.flagged) / static_cast<double>(summary.total) > o.max_flagged_frac;
    return summary;
}

std::string fmt6(const std::optional<double>& v) {
    if (!v) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

ojson num6(const std::optional<double>& v) { return v ? ojson(round6(*v)) : ojson(nullptr); }

}  // namespace

std::string extraction_prompt(const model::AudioQASample& s, const trace::ParsedTrace& t) {
    return judge::render_template(judge::TemplateId::event_extraction,
                                  {{"QUESTION", model::question_with_choices(s)},
                                   {"CORRECT_ANSWER", model::answer_with_letter(s)},
                                   {"GROUND_TRUTH_CAPTION", s.caption},
                                   {"MODEL_REASONING", trace::reasoning_path(t)}});
}

ojson extraction_record(const model::TraceRecord& t, const judge::EventExtraction& e, const std::string& judge) {
    ojson j{{"sample_id", t.sample_id}, {"model_id", t.model_id}, {"run_index", t.run_index}, {"judge", judge}};
    merge_into(j, judge::to_json(e));
    j["flags"] = ojson::array();
    return j;
}

ojson reward_record(const model::TraceRecord& t, const reward::RewardBreakdown& b) {
    ojson j{{"sample_id", t.sample_id}, {"model_id", t.model_id}, {"run_index", t.run_index}};
    merge_into(j, reward::to_json(b));
    return j;
}

RunSummary cmd_extract(const BatchOptions& o) {
    return run_resumable(o, [](const model::TraceRecord& t, const model::AudioQASample& s,
                               judge::JudgeGateway& g) {
        auto parsed = trace::parse_mpar2(t.raw_text);
        std::string describe = g.judge().describe();
        try {
            return extraction_record(t, g.ask_extraction(extraction_prompt(s, *parsed.trace)), describe);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::judge && e.code() != ErrorCode::judge_format) throw;
            auto j = extraction_record(t, {}, describe);
            j["flags"] = {"extraction_unavailable"};
            j["error"] = e.what();
            return j;
        }
    });
}

RunSummary cmd_reward(const RewardOptions& o) {
    o.weights.validate();
    return run_resumable(o, [&](const model::TraceRecord& t, const model::AudioQASample& s,
                                judge::JudgeGateway& g) {
        return reward_record(t, reward::score_trace(s, t.raw_text, g, o.weights, o.scoring));
    });
}

ojson cmd_eval(const EvalOptions& o) {
    o.bins.validate();
    auto dataset = index_dataset(o.dataset);
    std::map<TraceKey, model::TraceRecord> traces;
    for (auto& t : model::load_traces(o.traces)) traces.emplace(model::key_of(t), std::move(t));

    struct Joined {
        const model::TraceRecord* trace;
        const model::AudioQASample* sample;
        judge::EventExtraction extraction;
        bool flagged;
    };
    std::map<std::string, std::vector<Joined>> by_model;
    std::set<std::string> judges;
    std::set<std::string> missing_traces, missing_samples;
    std::set<TraceKey> seen;
    model::for_each_jsonl(o.extractions, [&](std::size_t line, const model::json& j) {
        TraceKey key;
        try {
            key = record_key(j);
        } catch (const std::exception&) {
            throw Error(ErrorCode::parse, "line " + std::to_string(line) +
                                              ": extraction record needs sample_id, model_id, run_index");
        }
        if (!seen.insert(key).second)
            throw Error(ErrorCode::parse, "duplicate extraction record " + model::to_string(key));
        auto t = traces.find(key);
        auto s = dataset.find(std::get<0>(key));
        if (t == traces.end()) missing_traces.insert(model::to_string(key));
        if (s == dataset.end()) missing_samples.insert(std::get<0>(key));
        if (t == traces.end() || s == dataset.end()) return;
        if (auto it = j.find("judge"); it != j.end() && it->is_string()) judges.insert(it->get<std::string>());
        by_model[std::get<1>(key)].push_back(
            {&t->second, &s->second, judge::extraction_from_json(j), judge_flagged(record_flags(j))});
    });
    if (!missing_samples.empty())
        throw Error(ErrorCode::not_found, "dataset missing sample_id(s): " +
                                              join_ids({missing_samples.begin(), missing_samples.end()}));
    if (!missing_traces.empty())
        throw Error(ErrorCode::not_found, "traces missing for: " +
                                              join_ids({missing_traces.begin(), missing_traces.end()}));

    ojson report;
    report["tool"] = {{"name", "cafe"}, {"version", version()}};
    report["fingerprint"] = {{"template", "event_extraction"},
                             {"template_hash", judge::template_hash(judge::TemplateId::event_extraction)},
                             {"judges", std::vector<std::string>(judges.begin(), judges.end())},
                             {"token_counter", trace::to_string(o.counter)},
                             {"bin_width", o.bins.width},
                             {"bin_origin", o.bins.origin}};
    report["models"] = ojson::array();

    std::ostringstream metrics_csv, bins_csv;
    metrics_csv << "model,n,acc_per,err_per,err_use,err_omit,undefined_n\n";
    bins_csv << "model,bin_mid,acc_per_mean,reasoning_acc,n\n";

    for (auto& [model_id, rows] : by_model) {
        std::sort(rows.begin(), rows.end(), [](const Joined& a, const Joined& b) {
            return model::key_of(*a.trace) < model::key_of(*b.trace);
        });
        std::vector<metrics::EventCounts> counts;
        std::vector<metrics::LengthPoint> points;
        std::vector<metrics::TaggedLength> tagged;
        std::size_t flagged = 0, correct = 0;
        double total_len = 0.0;
        for (const auto& r : rows) {
            if (r.flagged) {
                ++flagged;
                continue;
            }
            auto c = metrics::counts_from_extraction(r.extraction);
            counts.push_back(c);
            auto parsed = trace::parse_mpar2(r.trace->raw_text, {false, o.counter});
            const auto& pt = *parsed.trace;
            bool ok = reward::accuracy(pt, *r.sample) == 1;
            correct += ok;
            auto len = static_cast<double>(pt.token_len);
            total_len += len;
            points.push_back({len, metrics::compute_metrics(c).acc_per, ok});
            metrics::TaggedLength tl{{"domain:" + std::string(model::to_string(r.sample->domain_tag))}, len};
            if (r.sample->difficulty_tag)
                tl.tags.push_back("difficulty:" + std::string(model::to_string(*r.sample->difficulty_tag)));
            if (r.sample->task_tag) tl.tags.push_back("task:" + *r.sample->task_tag);
            tagged.push_back(std::move(tl));
        }

        ojson m;
        m["model_id"] = model_id;
        m["n"] = counts.size();
        m["flagged_n"] = flagged;
        if (counts.empty()) {
            m["counts"] = nullptr;
            m["micro"] = nullptr;
            m["macro"] = nullptr;
            m["undefined_n"] = 0;
            m["reasoning_acc"] = nullptr;
            m["mean_token_len"] = nullptr;
            m["bins"] = ojson::array();
            m["correlation"] = {{"r", nullptr}, {"p", nullptr}, {"n", 0}, {"reason", "no records"}};
            m["length_stats"] = ojson::object();
            report["models"].push_back(m);
            metrics_csv << model_id << ",0,,,,,0\n";
            continue;
        }
        auto agg = metrics::aggregate_micro(counts);
        const double n = static_cast<double>(counts.size());
        m["counts"] = {{"n_mat", agg.totals.n_mat},
                       {"n_hal", agg.totals.n_hal},
                       {"n_misuse", agg.totals.n_misuse},
                       {"n_neu", agg.totals.n_neu},
                       {"n_miss", agg.totals.n_miss}};
        m["micro"] = {{"n_pred", agg.micro.n_pred},         {"n_tgt", agg.micro.n_tgt},
                      {"acc_per", num6(agg.micro.acc_per)}, {"err_per", num6(agg.micro.err_per)},
                      {"err_use", num6(agg.micro.err_use)}, {"err_omit", num6(agg.micro.err_omit)}};
        m["macro"] = {{"acc_per", num6(agg.macro.acc_per)},
                      {"err_per", num6(agg.macro.err_per)},
                      {"err_use", num6(agg.macro.err_use)},
                      {"err_omit", num6(agg.macro.err_omit)}};
        m["undefined_n"] = agg.undefined_n;
        m["reasoning_acc"] = round6(static_cast<double>(correct) / n);
        m["mean_token_len"] = round6(total_len / n);

        auto bins = metrics::bin_by_length(points, o.bins);
        m["bins"] = ojson::array();
        std::vector<double> xs, ys;
        for (const auto& b : bins) {
            m["bins"].push_back({{"bin_mid", round6(b.bin_mid)},
                                 {"acc_per_mean", num6(b.acc_per_mean)},
                                 {"reasoning_acc", round6(b.reasoning_acc)},
                                 {"n", b.n_samples}});
            bins_csv << model_id << ',' << fmt6(b.bin_mid) << ',' << fmt6(b.acc_per_mean) << ','
                     << fmt6(b.reasoning_acc) << ',' << b.n_samples << '\n';
            if (b.acc_per_mean) {
                xs.push_back(*b.acc_per_mean);
                ys.push_back(b.reasoning_acc);
            }
        }
        try {
            auto c = metrics::pearson(xs, ys);
            m["correlation"] = {{"r", round6(c.r)}, {"p", round6(c.p)}, {"n", c.n}};
        } catch (const Error& e) {
            m["correlation"] = {{"r", nullptr}, {"p", nullptr}, {"n", xs.size()}, {"reason", e.what()}};
        }

        ojson stats = ojson::object();
        for (const auto& [tag, st] : metrics::length_stats_by_tag(tagged))
            stats[tag] = {{"mean", round6(st.mean)}, {"count", st.count}};
        m["length_stats"] = stats;
        report["models"].push_back(m);

        metrics_csv << model_id << ',' << counts.size() << ',' << fmt6(agg.micro.acc_per) << ','
                    << fmt6(agg.micro.err_per) << ',' << fmt6(agg.micro.err_use) << ','
                    << fmt6(agg.micro.err_omit) << ',' << agg.undefined_n << '\n';
    }

    auto write_file = [](const fs::path& path, const std::string& text) {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw Error(ErrorCode::io, "cannot write " + path.string());
        f << text;
    };
    auto with_suffix = [&](const char* suffix) {
        fs::path p = o.out_prefix;
        p += suffix;
        return p;
    };
    write_file(with_suffix(".json"), report.dump(2) + "\n");
    write_file(with_suffix(".metrics.csv"), metrics_csv.str());
    write_file(with_suffix(".bins.csv"), bins_csv.str());
    return report;
}

RunSummary cmd_filter_difficulty(const DifficultyOptions& o) {
    std::vector<ojson> out;
    model::for_each_jsonl(o.rollouts, [&](std::size_t line, const model::json& j) {
        pipeline::RolloutRecord r;
        try {
            r = pipeline::rollout_from_json(j);
        } catch (const Error& e) {
            throw Error(e.code(), "line " + std::to_string(line) + ": " + e.what());
        }
        ojson rec{{"sample_id", r.sample_id}, {"k", r.k}, {"n_correct", r.n_correct}};
        merge_into(rec, pipeline::to_json(pipeline::difficulty_filter(r)));
        out.push_back(std::move(rec));
    });
    write_jsonl_atomic(o.out, out);
    RunSummary s;
    s.total = s.written = out.size();
    return s;
}

RunSummary cmd_filter_qa(const QaFilterOptions& o) {
    auto samples = model::load_dataset(o.dataset);
    auto judge = make_judge(o.judge);
    judge::JudgeGateway gateway(judge, gateway_options(o.judge));
    std::vector<ojson> out(samples.size());
    std::atomic<std::size_t> flagged{0};
    parallel_for(samples.size(), o.judge.max_inflight, [&](std::size_t i) {
        ojson rec{{"sample_id", samples[i].id}};
        try {
            merge_into(rec, pipeline::to_json(pipeline::qa_filter(samples[i], gateway)));
            rec["flags"] = ojson::array();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::judge && e.code() != ErrorCode::judge_format) throw;
            rec["decision"] = nullptr;
            rec["reason"] = e.what();
            rec["score"] = nullptr;
            rec["flags"] = {"judge_unavailable"};
            ++flagged;
        }
        out[i] = std::move(rec);
    });
    write_jsonl_atomic(o.out, out);
    RunSummary s;
    s.total = s.written = out.size();
    s.flagged = flagged;
    s.judge_calls = judge_calls(*judge);
    s.threshold_exceeded = !out.empty() && static_cast<double>(s.flagged) / static_cast<double>(out.size()) >
                                               o.max_flagged_frac;
    return s;
}

RunSummary cmd_filter_cot(const CotFilterOptions& o) {
    std::vector<ojson> out;
    std::size_t flagged = 0;
    model::for_each_jsonl(o.scores, [&](std::size_t line, const model::json& j) {
        ojson rec;
        if (auto id = j.find("sample_id"); id != j.end()) rec["sample_id"] = *id;
        try {
            judge::PairScore pair;
            if (auto reply = j.find("reply"); reply != j.end() && reply->is_string()) {
                pair = judge::parse_pair_score(reply->get<std::string>());
            } else {
                pair.reasoning_score = j.at("reasoning_score").get<double>();
                pair.review_score = j.at("review_score").get<double>();
            }
            rec["reasoning_score"] = pair.reasoning_score;
            rec["review_score"] = pair.review_score;
            auto v = pipeline::cot_filter(pair, o.thresholds);
            rec["decision"] = pipeline::to_string(v.decision);
            rec["reason"] = v.reason;
        } catch (const JudgeFormatError& e) {
            rec["decision"] = nullptr;
            rec["reason"] = e.what();
            rec["flags"] = {"malformed_reply"};
            ++flagged;
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse, "line " + std::to_string(line) + ": " + e.what());
        }
        out.push_back(std::move(rec));
    });
    write_jsonl_atomic(o.out, out);
    RunSummary s;
    s.total = s.written = out.size();
    s.flagged = flagged;
    return s;
}

RunSummary cmd_gen_parse(const GenParseOptions& o) {
    std::vector<ojson> out;
    std::size_t failed = 0;
    model::for_each_jsonl(o.replies, [&](std::size_t line, const model::json& j) {
        auto reply = j.find("reply");
        if (reply == j.end() || !reply->is_string())
            throw Error(ErrorCode::parse, "line " + std::to_string(line) + ": missing field reply");
        ojson rec;
        if (auto id = j.find("id"); id != j.end()) rec["id"] = *id;
        try {
            merge_into(rec, pipeline::to_json(pipeline::parse_generated_qa(reply->get<std::string>())));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::parse) throw;
            rec["kind"] = "error";
            rec["error"] = e.what();
            ++failed;
        }
        out.push_back(std::move(rec));
    });
    write_jsonl_atomic(o.out, out);
    RunSummary s;
    s.total = s.written = out.size();
    s.flagged = failed;
    return s;
}

RunSummary cmd_balance(const BalanceCmdOptions& o) {
    std::vector<ojson> lines;
    std::vector<pipeline::PoolItem> pool;
    model::for_each_jsonl(o.pool, [&](std::size_t line, const model::json& j) {
        try {
            pool.push_back({j.at("sample_id").get<std::string>(), j.at("aspect").get<std::string>(),
                            j.at("duration_s").get<double>()});
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse, "line " + std::to_string(line) + ": " + e.what());
        }
        lines.push_back(j);
    });
    auto options = o.balance;
    if (options.aspects.empty())
        for (const auto& p : pool)
            if (std::find(options.aspects.begin(), options.aspects.end(), p.aspect) == options.aspects.end())
                options.aspects.push_back(p.aspect);
    std::vector<ojson> out;
    for (auto i : pipeline::balanced_sample(pool, options)) out.push_back(lines[i]);
    write_jsonl_atomic(o.out, out);
    RunSummary s;
    s.total = pool.size();
    s.written = out.size();
    return s;
}

std::string cmd_render(std::string_view template_name, const nlohmann::json& bindings) {
    auto id = judge::parse_template_id(template_name);
    if (!id) throw Error(ErrorCode::invalid_argument, "unknown template " + std::string(template_name));
    if (!bindings.is_object()) throw Error(ErrorCode::invalid_argument, "bindings must be a JSON object");
    judge::Bindings b;
    for (auto it = bindings.begin(); it != bindings.end(); ++it) {
        if (!it->is_string()) throw Error(ErrorCode::invalid_argument, "binding " + it.key() + " must be a string");
        b[it.key()] = it->get<std::string>();
    }
    return judge::render_template(*id, b);
}

}  // namespace cafe::app
