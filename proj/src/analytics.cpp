#include "memore/analytics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "json_util.hpp"
#include "memore/fusion.hpp"

namespace memore {

using nlohmann::json;

std::vector<RequirementEmotionRecord> link(const std::vector<SegmentScore>& scores,
                                           const std::vector<RequirementTag>& tags,
                                           const ValenceMap& valence) {
  std::map<std::string, std::vector<TimeWindow>> intervals;
  for (const auto& t : tags) {
    auto& list = intervals[t.requirement_id];
    if (t.t_end) list.push_back({t.t_start, *t.t_end});
  }

  std::vector<RequirementEmotionRecord> out;
  for (const auto& [id, windows] : intervals) {
    RequirementEmotionRecord rec;
    rec.requirement_id = id;
    EmotionDistribution::Mass sum{};
    for (const auto& s : scores) {
      const bool hit = std::any_of(windows.begin(), windows.end(), [&](const TimeWindow& w) {
        return overlap(s.window(), w) > 0.0;
      });
      if (!hit) continue;
      rec.segments.push_back(s.segment_id);
      for (std::size_t i = 0; i < kEmotionCount; ++i) sum[i] += s.fused.mass()[i];
    }
    rec.evidence_count = rec.segments.size();
    if (rec.evidence_count > 0) {
      for (auto& v : sum) v /= static_cast<double>(rec.evidence_count);
      rec.aggregate = normalize(sum);
      rec.valence = valence_score(*rec.aggregate, valence);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<PriorityEntry> prioritize(const std::vector<RequirementEmotionRecord>& records,
                                      const ValenceMap& valence, PriorityOptions options) {
  struct Row {
    const RequirementEmotionRecord* rec;
    std::optional<double> score;
  };
  std::vector<Row> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    Row row{&r, std::nullopt};
    if (r.evidence_count > 0 && r.aggregate) {
      const double n = static_cast<double>(r.evidence_count);
      const double discount = options.evidence_discount ? 1.0 - 1.0 / (1.0 + n) : 1.0;
      row.score = valence_score(*r.aggregate, valence) * discount;
    }
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.score.has_value() != b.score.has_value()) return a.score.has_value();
    if (a.score && *a.score != *b.score) return *a.score > *b.score;
    if (a.rec->evidence_count != b.rec->evidence_count) {
      return a.rec->evidence_count > b.rec->evidence_count;
    }
    return a.rec->requirement_id < b.rec->requirement_id;
  });
  std::vector<PriorityEntry> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.push_back({rows[i].rec->requirement_id, rows[i].score, i + 1});
  }
  return out;
}

std::string_view to_string(AlertKind k) noexcept {
  return k == AlertKind::SustainedNegative ? "sustained_negative" : "confusion_spike";
}

std::vector<Alert> detect_alerts(const std::string& session_id,
                                 const std::vector<SegmentScore>& scores,
                                 const ValenceMap& valence, AlertOptions options) {
  std::vector<Alert> out;
  const std::size_t need = std::max<std::size_t>(options.window_n, 1);
  std::size_t run_start = 0;
  auto close_run = [&](std::size_t begin, std::size_t end) {
    if (end - begin < need) return;
    Alert a;
    a.session_id = session_id;
    a.kind = AlertKind::SustainedNegative;
    a.t_start = scores[begin].t_start;
    a.t_end = scores[end - 1].t_end;
    a.first_segment = scores[begin].segment_id;
    a.last_segment = scores[end - 1].segment_id;
    std::array<bool, kEmotionCount> seen{};
    double total = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      seen[index_of(scores[i].dominant)] = true;
      total += valence_score(scores[i].fused, valence);
    }
    for (auto label : kAllEmotions) {
      if (seen[index_of(label)]) a.trigger_labels.push_back(label);
    }
    a.mean_valence = total / static_cast<double>(end - begin);
    out.push_back(std::move(a));
  };

  bool in_run = false;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool negative = valence_score(scores[i].fused, valence) < options.threshold;
    const bool contiguous = i > 0 && scores[i].segment_id == scores[i - 1].segment_id + 1;
    if (in_run && (!negative || !contiguous)) {
      close_run(run_start, i);
      in_run = false;
    }
    if (negative && !in_run) {
      run_start = i;
      in_run = true;
    }
  }
  if (in_run) close_run(run_start, scores.size());
  return out;
}

namespace {

json optional_number(const std::optional<double>& v) {
  return v ? json(round_sig9(*v)) : json(nullptr);
}

}  // namespace

json to_json(const RequirementEmotionRecord& r) {
  return json{{"requirement_id", r.requirement_id},
              {"segments", r.segments},
              {"evidence_count", r.evidence_count},
              {"aggregate", r.aggregate ? to_json(*r.aggregate) : json(nullptr)},
              {"valence", optional_number(r.valence)}};
}

json to_json(const PriorityEntry& p) {
  return json{{"requirement_id", p.requirement_id},
              {"priority_score", optional_number(p.priority_score)},
              {"rank", p.rank}};
}

json to_json(const Alert& a) {
  json labels = json::array();
  for (auto l : a.trigger_labels) labels.push_back(std::string(to_string(l)));
  return json{{"session_id", a.session_id},
              {"kind", std::string(to_string(a.kind))},
              {"t_start", round_sig9(a.t_start)},
              {"t_end", round_sig9(a.t_end)},
              {"first_segment", a.first_segment},
              {"last_segment", a.last_segment},
              {"trigger_labels", std::move(labels)},
              {"mean_valence", round_sig9(a.mean_valence)}};
}

Alert alert_from_json(const json& j) {
  Alert a;
  a.session_id = detail::text(j, "session_id");
  const auto kind = detail::text(j, "kind");
  a.kind = kind == "confusion_spike" ? AlertKind::ConfusionSpike : AlertKind::SustainedNegative;
  a.t_start = detail::number(j, "t_start");
  a.t_end = detail::number(j, "t_end");
  a.first_segment = detail::count(j, "first_segment");
  a.last_segment = detail::count(j, "last_segment");
  for (const auto& l : detail::field(j, "trigger_labels")) {
    auto label = parse_emotion(l.get<std::string>());
    if (!label) throw Error(ErrorCode::InvalidArgument, "unknown trigger label");
    a.trigger_labels.push_back(*label);
  }
  a.mean_valence = detail::number(j, "mean_valence");
  return a;
}

std::optional<ReportFormat> parse_report_format(std::string_view s) noexcept {
  if (s == "json") return ReportFormat::Json;
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  return std::nullopt;
}

json report_json(const ReportInput& in) {
  json timeline = json::array();
  for (const auto& s : in.scores) {
    json channels = json::array();
    for (const auto& [c, _] : s.per_modality) channels.push_back(std::string(to_string(c)));
    json failed = json::object();
    for (const auto& [m, msg] : s.failures) failed[std::string(to_string(m))] = msg;
    timeline.push_back(json{{"segment_id", s.segment_id},
                            {"t_start", round_sig9(s.t_start)},
                            {"t_end", round_sig9(s.t_end)},
                            {"dominant", std::string(to_string(s.dominant))},
                            {"valence", round_sig9(valence_score(s.fused, in.valence))},
                            {"fused", to_json(s.fused)},
                            {"channels", std::move(channels)},
                            {"partial_failures", std::move(failed)}});
  }
  json failures = json::array();
  for (const auto& f : in.failures) {
    json errs = json::object();
    for (const auto& [m, msg] : f.errors) errs[std::string(to_string(m))] = msg;
    failures.push_back(json{{"segment_id", f.segment_id},
                            {"reason", std::string(to_string(f.reason))},
                            {"errors", std::move(errs)}});
  }
  json requirements = json::array();
  for (const auto& r : in.records) {
    json rec = to_json(r);
    json tags = json::array();
    for (const auto& t : in.tags) {
      if (t.requirement_id != r.requirement_id) continue;
      tags.push_back(json{{"label", t.label},
                          {"t_start", round_sig9(t.t_start)},
                          {"t_end", t.t_end ? json(round_sig9(*t.t_end)) : json(nullptr)}});
    }
    rec["tags"] = std::move(tags);
    rec["dominant"] = r.aggregate ? json(std::string(to_string(dominant(*r.aggregate))))
                                  : json(nullptr);
    requirements.push_back(std::move(rec));
  }
  json ranking = json::array();
  for (const auto& p : in.ranking) ranking.push_back(to_json(p));
  json alerts = json::array();
  for (const auto& a : in.alerts) alerts.push_back(to_json(a));

  return json{{"report_version", 1},
              {"session",
               json{{"session_id", in.session_id},
                    {"name", in.name},
                    {"created_at", in.created_at},
                    {"ended_at", in.ended_at},
                    {"segment_length_s", round_sig9(in.segment_length_s)},
                    {"segmentation_mode", std::string(to_string(in.segmentation_mode))},
                    {"duration_s", round_sig9(in.duration_s)},
                    {"segments_scored", in.scores.size()},
                    {"segments_failed", in.failures.size()}}},
              {"valence_map", to_json(in.valence)},
              {"timeline", std::move(timeline)},
              {"failures", std::move(failures)},
              {"requirements", std::move(requirements)},
              {"ranking", std::move(ranking)},
              {"alerts", std::move(alerts)}};
}

namespace {

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string cell(std::string s) {
  std::string out;
  for (char c : s) {
    if (c == '|') {
      out += "\\|";
    } else if (c == '\n') {
      out += ' ';
    } else {
      out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_report(const ReportInput& in, ReportFormat format) {
  if (format == ReportFormat::Json) return report_json(in).dump(2) + "\n";

  std::ostringstream md;
  md << "# Elicitation session report: " << cell(in.name.empty() ? in.session_id : in.name)
     << "\n\n";
  md << "| Field | Value |\n|---|---|\n";
  md << "| Session | " << cell(in.session_id) << " |\n";
  md << "| Started | " << in.created_at << " |\n";
  md << "| Ended | " << in.ended_at << " |\n";
  md << "| Segmentation | " << to_string(in.segmentation_mode) << ", "
     << fixed3(in.segment_length_s) << " s |\n";
  md << "| Duration (s) | " << fixed3(in.duration_s) << " |\n";
  md << "| Segments scored | " << in.scores.size() << " |\n";
  md << "| Segments failed | " << in.failures.size() << " |\n\n";

  md << "## Emotion timeline\n\n";
  if (in.scores.empty()) {
    md << "No scored segments.\n\n";
  } else {
    md << "| Segment | Start (s) | End (s) | Dominant | p(dominant) | Valence |\n"
       << "|---:|---:|---:|---|---:|---:|\n";
    for (const auto& s : in.scores) {
      md << "| " << s.segment_id << " | " << fixed3(s.t_start) << " | " << fixed3(s.t_end)
         << " | " << to_string(s.dominant) << " | " << fixed3(s.fused[s.dominant]) << " | "
         << fixed3(valence_score(s.fused, in.valence)) << " |\n";
    }
    md << "\n";
  }
  if (!in.failures.empty()) {
    md << "## Scoring failures\n\n| Segment | Reason |\n|---:|---|\n";
    for (const auto& f : in.failures) {
      md << "| " << f.segment_id << " | " << to_string(f.reason) << " |\n";
    }
    md << "\n";
  }

  md << "## Requirements\n\n";
  if (in.records.empty()) {
    md << "No requirements were tagged.\n\n";
  } else {
    std::map<std::string, const PriorityEntry*> by_id;
    for (const auto& p : in.ranking) by_id[p.requirement_id] = &p;
    md << "| Rank | Requirement | Evidence | Dominant | Valence | Priority |\n"
       << "|---:|---|---:|---|---:|---:|\n";
    for (const auto& r : in.records) {
      const PriorityEntry* p = by_id.count(r.requirement_id) ? by_id[r.requirement_id] : nullptr;
      md << "| " << (p ? std::to_string(p->rank) : "-") << " | " << cell(r.requirement_id)
         << " | " << r.evidence_count << " | "
         << (r.aggregate ? std::string(to_string(dominant(*r.aggregate))) : "-") << " | "
         << (r.valence ? fixed3(*r.valence) : "-") << " | "
         << (p && p->priority_score ? fixed3(*p->priority_score) : "-") << " |\n";
    }
    md << "\n";
  }

  md << "## Alerts\n\n";
  if (in.alerts.empty()) {
    md << "No alerts.\n";
  } else {
    md << "| Kind | Start (s) | End (s) | Segments | Labels | Mean valence |\n"
       << "|---|---:|---:|---|---|---:|\n";
    for (const auto& a : in.alerts) {
      std::string labels;
      for (auto l : a.trigger_labels) {
        if (!labels.empty()) labels += ", ";
        labels += to_string(l);
      }
      md << "| " << to_string(a.kind) << " | " << fixed3(a.t_start) << " | " << fixed3(a.t_end)
         << " | " << a.first_segment << "-" << a.last_segment << " | " << labels << " | "
         << fixed3(a.mean_valence) << " |\n";
    }
  }
  return md.str();
}

}  // namespace memore
