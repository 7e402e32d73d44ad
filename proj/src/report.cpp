#include "genolm/report.hpp"

#include <cstdio>

#include "genolm/common.hpp"

namespace genolm {

namespace {

std::string format_metric(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

nlohmann::ordered_json confusion_to_json(const ConfusionCounts& c) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : c.matrix) rows.push_back(row);
    return rows;
}

ConfusionCounts confusion_from_json(const nlohmann::json& j) {
    ConfusionCounts c(static_cast<int>(j.size()));
    for (std::size_t t = 0; t < j.size(); ++t)
        for (std::size_t p = 0; p < j[t].size(); ++p)
            c.matrix[t][p] = j[t][p].get<std::int64_t>();
    return c;
}

}  // namespace

MetricRow compute_metric_row(const std::vector<int>& truth, const std::vector<int>& predicted,
                             const std::vector<std::vector<double>>& class_scores, int num_classes,
                             const std::string& label, int shots) {
    MetricRow row;
    row.label = label;
    row.shots = shots;
    row.confusion = ConfusionCounts::from_predictions(truth, predicted, num_classes);
    row.accuracy = accuracy(row.confusion);
    row.f1 = f1_score(row.confusion);
    row.mcc = mcc(row.confusion);
    row.balanced_accuracy = balanced_accuracy(row.confusion);
    if (num_classes == 2) {
        std::vector<double> positive_scores;
        positive_scores.reserve(class_scores.size());
        for (const auto& s : class_scores) positive_scores.push_back(s[1]);
        row.auc_roc = auc_roc(positive_scores, truth);
    } else {
        row.auc_roc = auc_roc_ovr_macro(class_scores, truth);
    }
    return row;
}

nlohmann::ordered_json EvaluationReport::to_json() const {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["kind"] = "evaluation_report";
    j["name"] = name;
    j["protocol"] = protocol;
    j["model"] = model_kind;
    j["dataset_fingerprint"] = dataset_fingerprint;
    j["model_fingerprint"] = model_fingerprint;
    // conventions baked into the multiclass numbers, stated for the record
    j["metric_conventions"] = {{"multiclass_f1", "macro_one_vs_rest"},
                               {"multiclass_mcc", "gorodkin_rk"},
                               {"multiclass_auc", "one_vs_rest_macro"}};
    j["config"] = config;
    nlohmann::ordered_json jrows = nlohmann::ordered_json::array();
    for (const MetricRow& r : rows) {
        nlohmann::ordered_json jr;
        jr["label"] = r.label;
        jr["shots"] = r.shots;
        jr["accuracy"] = r.accuracy;
        jr["f1"] = r.f1;
        jr["mcc"] = r.mcc;
        jr["auc_roc"] = r.auc_roc;
        jr["balanced_accuracy"] = r.balanced_accuracy;
        jr["confusion"] = confusion_to_json(r.confusion);
        jrows.push_back(std::move(jr));
    }
    j["rows"] = std::move(jrows);
    j["details"] = details;
    j["timestamp"] = timestamp;
    return j;
}

EvaluationReport EvaluationReport::from_json(const nlohmann::json& j) {
    if (j.value("kind", "") != "evaluation_report")
        throw ParseError("not an evaluation report (kind field mismatch)");
    EvaluationReport r;
    r.name = j.value("name", "");
    r.protocol = j.at("protocol").get<std::string>();
    r.model_kind = j.at("model").get<std::string>();
    r.dataset_fingerprint = j.value("dataset_fingerprint", "");
    r.model_fingerprint = j.value("model_fingerprint", "");
    r.config = j.value("config", nlohmann::json::object());
    r.details = j.value("details", nlohmann::json::object());
    r.timestamp = j.value("timestamp", "");
    for (const auto& jr : j.at("rows")) {
        MetricRow row;
        row.label = jr.at("label").get<std::string>();
        row.shots = jr.at("shots").get<int>();
        row.accuracy = jr.at("accuracy").get<double>();
        row.f1 = jr.at("f1").get<double>();
        row.mcc = jr.at("mcc").get<double>();
        row.auc_roc = jr.at("auc_roc").get<double>();
        row.balanced_accuracy = jr.at("balanced_accuracy").get<double>();
        row.confusion = confusion_from_json(jr.at("confusion"));
        r.rows.push_back(std::move(row));
    }
    return r;
}

void EvaluationReport::save(const std::string& path) const {
    write_file(path, to_json().dump(2) + "\n");
}

EvaluationReport EvaluationReport::load(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("report " + path + ": " + e.what());
    }
    try {
        return from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("report " + path + ": " + e.what());
    }
}

std::string report_csv_header() {
    return "name,protocol,model,row,shots,accuracy,f1,mcc,auc_roc,balanced_accuracy";
}

std::vector<std::string> report_csv_rows(const EvaluationReport& report) {
    std::vector<std::string> out;
    for (const MetricRow& r : report.rows) {
        std::string line = report.name + "," + report.protocol + "," + report.model_kind + "," +
                           r.label + "," + std::to_string(r.shots) + "," +
                           format_metric(r.accuracy) + "," + format_metric(r.f1) + "," +
                           format_metric(r.mcc) + "," + format_metric(r.auc_roc) + "," +
                           format_metric(r.balanced_accuracy);
        out.push_back(std::move(line));
    }
    return out;
}

}  // namespace genolm
