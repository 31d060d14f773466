"""Classification metrics and their text/CSV renderings."""

import csv
import io

import numpy as np


def classification_report(y_true, y_pred, labels):
    """Accuracy, per-class precision/recall/support and a confusion matrix.

    Rows of the confusion matrix are true labels, columns predictions, both in
    ``labels`` order.  Precision of a never-predicted class is reported as 0.
    """
    labels = list(labels)
    index = {n: i for i, n in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        cm[index[t], index[p]] += 1
    total = int(cm.sum())
    per_class = {}
    for i, name in enumerate(labels):
        tp = int(cm[i, i])
        predicted = int(cm[:, i].sum())
        support = int(cm[i].sum())
        per_class[name] = {
            "precision": tp / predicted if predicted else 0.0,
            "recall": tp / support if support else 0.0,
            "support": support,
        }
    return {"accuracy": float(np.trace(cm) / total) if total else 0.0,
            "n": total, "labels": labels, "per_class": per_class, "confusion": cm.tolist()}


def format_report(report):
    labels = report["labels"]
    width = max([len(n) for n in labels] + [9])
    lines = [f"accuracy  {report['accuracy']:.4f}  (n={report['n']})", ""]
    lines.append(f"{'class':<{width}}  precision  recall  support")
    for name in labels:
        pc = report["per_class"][name]
        lines.append(f"{name:<{width}}  {pc['precision']:9.4f}  {pc['recall']:6.4f}  {pc['support']:7d}")
    lines.append("")
    lines.append("confusion (rows = true, columns = predicted)")
    cw = max([len(str(v)) for row in report["confusion"] for v in row] + [3])
    lines.append(" " * width + "  " + " ".join(f"{i:>{cw}}" for i in range(len(labels))))
    for i, (name, row) in enumerate(zip(labels, report["confusion"])):
        lines.append(f"{name:<{width}}  " + " ".join(f"{v:>{cw}}" for v in row) + f"   [{i}]")
    return "\n".join(lines)


def report_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "precision", "recall", "support"] + [f"pred:{n}" for n in report["labels"]])
    for name, row in zip(report["labels"], report["confusion"]):
        pc = report["per_class"][name]
        w.writerow([name, f"{pc['precision']:.6f}", f"{pc['recall']:.6f}", pc["support"]] + row)
    w.writerow(["accuracy", f"{report['accuracy']:.6f}", "", report["n"]])
    return buf.getvalue()
