/** Pure renderers: service payload in, SVG/HTML string out.
 *
 * None of these functions touch the DOM or the network, so they run
 * unchanged under node for snapshot tests. Every number shown on screen
 * carries a `data-value` attribute holding the raw payload field verbatim;
 * the cockpit displays what the service computed and computes nothing
 * itself (coordinate scaling for plots is display geometry, not a
 * statistic).
 */

import { layoutDag } from "./layout.js";
import type {
  BalanceRow,
  DagPayload,
  ErrorPayload,
  ForestRow,
  IdentifyPayload,
  MatchPayload,
  MonitorPayload,
  OverlapReport,
  PositivityPayload,
  SchemaPayload,
} from "./types.js";
import type { HistoryEntry } from "./session.js";

export function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(value: number | string | boolean, digits?: number): string {
  if (
    typeof value === "number" &&
    digits !== undefined &&
    Number.isFinite(value)
  ) {
    return value.toFixed(digits);
  }
  return String(value);
}

/** A displayed value: formatted text plus the exact payload field. */
export function valueSpan(
  value: number | string | boolean,
  digits?: number,
  cls = "num",
): string {
  const raw = esc(String(value));
  return `<span class="${cls}" data-value="${raw}">${esc(fmt(value, digits))}</span>`;
}

/** Fixed-precision coordinate for SVG geometry (keeps snapshots stable). */
function px(n: number): string {
  const r = Math.round(n * 100) / 100;
  return Object.is(r, -0) ? "0" : String(r);
}

/* ------------------------------------------------------------------ */
/* Study graph                                                         */
/* ------------------------------------------------------------------ */

const NODE_RADIUS = 30;

function witnessEdgeKeys(identify: IdentifyPayload | null): Set<string> {
  const keys = new Set<string>();
  if (!identify) return keys;
  for (const path of identify.witness_paths) {
    for (let i = 0; i < path.arrows.length; i++) {
      const a = path.nodes[i]!;
      const b = path.nodes[i + 1]!;
      keys.add(path.arrows[i] === "<-" ? `${b}->${a}` : `${a}->${b}`);
    }
  }
  return keys;
}

/**
 * Draw the study graph. When an identification result is given, the first
 * admissible adjustment set is painted green and every edge lying on a
 * witness path (an open non-causal route) is painted red.
 */
export function renderDag(
  dag: DagPayload,
  identify: IdentifyPayload | null = null,
): string {
  const layout = layoutDag(dag.nodes, dag.edges);
  const adjust = new Set(identify?.admissible_sets[0] ?? []);
  const latent = new Set(identify?.latent ?? []);
  const witness = witnessEdgeKeys(identify);

  const parts: string[] = [];
  parts.push(
    `<svg class="dag" viewBox="0 0 ${px(layout.width)} ${px(layout.height)}" ` +
      `xmlns="http://www.w3.org/2000/svg" role="img">`,
  );
  parts.push(
    "<defs>" +
      '<marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" ' +
      'markerWidth="7" markerHeight="7" orient="auto-start-reverse">' +
      '<path d="M 0 0 L 10 5 L 0 10 z" fill="#555"/></marker>' +
      '<marker id="arrow-witness" viewBox="0 0 10 10" refX="9" refY="5" ' +
      'markerWidth="7" markerHeight="7" orient="auto-start-reverse">' +
      '<path d="M 0 0 L 10 5 L 0 10 z" fill="#c0392b"/></marker>' +
      "</defs>",
  );

  for (const [a, b] of dag.edges) {
    const from = layout.nodes.get(a)!;
    const to = layout.nodes.get(b)!;
    const dx = to.x - from.x;
    const dy = to.y - from.y;
    const len = Math.hypot(dx, dy) || 1;
    const ux = dx / len;
    const uy = dy / len;
    const x1 = from.x + ux * NODE_RADIUS;
    const y1 = from.y + uy * NODE_RADIUS;
    const x2 = to.x - ux * (NODE_RADIUS + 6);
    const y2 = to.y - uy * (NODE_RADIUS + 6);
    const hot = witness.has(`${a}->${b}`);
    const cls = hot ? "edge edge-witness" : "edge";
    const marker = hot ? "arrow-witness" : "arrow";
    parts.push(
      `<line class="${cls}" data-edge="${esc(a)}->${esc(b)}" ` +
        `x1="${px(x1)}" y1="${px(y1)}" x2="${px(x2)}" y2="${px(y2)}" ` +
        `marker-end="url(#${marker})"/>`,
    );
  }

  for (const name of [...layout.nodes.keys()].sort()) {
    const node = layout.nodes.get(name)!;
    let cls = "node";
    if (identify && name === identify.x) cls += " node-exposure";
    if (identify && name === identify.y) cls += " node-outcome";
    if (adjust.has(name)) cls += " node-adjust";
    if (latent.has(name)) cls += " node-latent";
    parts.push(
      `<g class="${cls}" data-node="${esc(name)}">` +
        `<circle cx="${px(node.x)}" cy="${px(node.y)}" r="${NODE_RADIUS}"/>` +
        `<text x="${px(node.x)}" y="${px(node.y + 4)}" ` +
        `text-anchor="middle">${esc(name)}</text></g>`,
    );
  }

  parts.push("</svg>");
  return parts.join("\n");
}

export function renderIdentify(payload: IdentifyPayload): string {
  const parts: string[] = ['<section class="identify-result">'];
  const ok = payload.status === "Identified";
  parts.push(
    `<p class="status ${ok ? "status-identified" : "status-blocked"}" ` +
      `data-value="${esc(payload.status)}">${esc(payload.status)}</p>`,
  );
  const latent =
    payload.latent.length > 0 ? payload.latent.join(", ") : "none";
  parts.push(
    `<p class="question">effect of <b>${esc(payload.x)}</b> on ` +
      `<b>${esc(payload.y)}</b> &mdash; latent: ${esc(latent)}</p>`,
  );
  if (ok) {
    parts.push('<ul class="admissible-sets">');
    for (const set of payload.admissible_sets) {
      parts.push(
        `<li class="set-chip" data-value="${esc(set.join(","))}">{ ` +
          esc(set.join(", ")) +
          " }</li>",
      );
    }
    parts.push("</ul>");
  } else {
    parts.push('<p class="witness-intro">open non-causal paths:</p>');
    parts.push('<ul class="witness-list">');
    for (const path of payload.witness_paths) {
      parts.push(
        `<li class="witness-path" data-value="${esc(path.text)}">` +
          esc(path.text) +
          "</li>",
      );
    }
    parts.push("</ul>");
  }
  parts.push("</section>");
  return parts.join("\n");
}

/* ------------------------------------------------------------------ */
/* Positivity                                                          */
/* ------------------------------------------------------------------ */

function verdictBadge(report: OverlapReport): string {
  const v = report.verdict;
  return (
    `<span class="badge badge-${v.toLowerCase()}" data-value="${esc(v)}">` +
    esc(v) +
    "</span>"
  );
}

function densitySvg(plot: PositivityPayload["plot"]): string {
  const { score, density_treated, density_control } = plot;
  const W = 520;
  const H = 240;
  const M = 30;
  const n = score.length;
  if (n === 0) {
    return '<p class="empty">no density profile returned</p>';
  }
  const s0 = Math.min(...score);
  const s1 = Math.max(...score);
  const span = s1 - s0 || 1;
  const dmax =
    Math.max(...density_treated, ...density_control) || 1;
  const toX = (s: number) => M + ((s - s0) / span) * (W - 2 * M);
  const toY = (d: number) => H - M - (d / dmax) * (H - 2 * M);
  const line = (values: number[]) =>
    values.map((d, i) => `${px(toX(score[i]!))},${px(toY(d))}`).join(" ");
  return (
    `<svg class="density" viewBox="0 0 ${W} ${H}" ` +
    'xmlns="http://www.w3.org/2000/svg" role="img">' +
    `<line class="axis" x1="${M}" y1="${H - M}" x2="${W - M}" y2="${H - M}"/>` +
    `<polyline class="density-treated" fill="none" points="${line(density_treated)}"/>` +
    `<polyline class="density-control" fill="none" points="${line(density_control)}"/>` +
    "</svg>"
  );
}

export function renderPositivity(payload: PositivityPayload): string {
  const o = payload.overlap;
  const parts: string[] = ['<section class="positivity">'];
  parts.push(`<p class="headline">overlap verdict: ${verdictBadge(o)}</p>`);
  parts.push('<dl class="stats">');
  parts.push(
    "<dt>overlap coefficient</dt><dd>" +
      valueSpan(o.overlap_coefficient, 3) +
      "</dd>",
  );
  parts.push(
    "<dt>patients with complete covariates</dt><dd>" +
      valueSpan(payload.n_complete) +
      "</dd>",
  );
  parts.push(
    "<dt>dropped (incomplete)</dt><dd>" +
      valueSpan(payload.n_dropped_incomplete) +
      "</dd>",
  );
  parts.push(
    "<dt>treated mass outside support</dt><dd>" +
      valueSpan(o.mass_outside.treated, 4) +
      "</dd>",
  );
  parts.push(
    "<dt>control mass outside support</dt><dd>" +
      valueSpan(o.mass_outside.control, 4) +
      "</dd>",
  );
  parts.push("</dl>");
  if (o.one_sided_regions.length > 0) {
    parts.push('<ul class="one-sided">');
    for (const [arm, lo, hi] of o.one_sided_regions) {
      parts.push(
        `<li>only ${esc(arm)} patients on scores ` +
          `[${valueSpan(lo, 3)}, ${valueSpan(hi, 3)}]</li>`,
      );
    }
    parts.push("</ul>");
  }
  parts.push(densitySvg(payload.plot));
  parts.push("</section>");
  return parts.join("\n");
}

/* ------------------------------------------------------------------ */
/* Matching                                                            */
/* ------------------------------------------------------------------ */

function balanceTable(rows: BalanceRow[]): string {
  const parts: string[] = ['<table class="balance">'];
  parts.push(
    "<thead><tr><th>covariate</th><th>SMD before</th>" +
      "<th>SMD after</th></tr></thead><tbody>",
  );
  for (const row of rows) {
    parts.push(
      `<tr data-covariate="${esc(row.covariate)}">` +
        `<td>${esc(row.covariate)}</td>` +
        `<td>${valueSpan(row.smd_before, 3)}</td>` +
        `<td>${valueSpan(row.smd_after, 3)}</td></tr>`,
    );
  }
  parts.push("</tbody></table>");
  return parts.join("\n");
}

export function renderMatch(payload: MatchPayload): string {
  const m = payload.match;
  const parts: string[] = ['<section class="match-plan">'];
  parts.push('<dl class="stats">');
  parts.push(
    `<dt>matched pairs</dt><dd>${valueSpan(m.n_pairs)}</dd>`,
  );
  parts.push(
    "<dt>patients in matched cohort</dt><dd>" +
      valueSpan(m.n_matched_patients) +
      "</dd>",
  );
  parts.push(
    `<dt>stratum size</dt><dd>${valueSpan(m.n_stratum)}</dd>`,
  );
  parts.push(
    `<dt>treated / control</dt><dd>${valueSpan(m.n_treated)} / ` +
      valueSpan(m.n_control) +
      "</dd>",
  );
  parts.push(
    "<dt>sampling ratio</dt><dd>" +
      valueSpan(m.sampling_ratio_display, 2) +
      "</dd>",
  );
  parts.push(
    `<dt>caliper (logit units)</dt><dd>${valueSpan(m.caliper, 4)}</dd>`,
  );
  parts.push(`<dt>seed</dt><dd>${valueSpan(m.seed)}</dd>`);
  parts.push("</dl>");
  parts.push(
    '<p class="rct-line">an RCT randomising ' +
      valueSpan(payload.rct.rct_n) +
      " patients draws on the same recruitment pool as an " +
      "observational cohort of " +
      valueSpan(payload.rct.equivalent_cohort_size) +
      "</p>",
  );
  if (m.unmatched_treated.length > 0) {
    parts.push(
      '<p class="unmatched">unmatched treated (' +
        valueSpan(m.unmatched_treated.length) +
        "): " +
        esc(m.unmatched_treated.join(", ")) +
        "</p>",
    );
  }
  parts.push(
    '<p class="post-overlap">post-match overlap: ' +
      verdictBadge(payload.balance.post_match_overlap) +
      "</p>",
  );
  parts.push(balanceTable(payload.balance.rows));
  parts.push("</section>");
  return parts.join("\n");
}

/* ------------------------------------------------------------------ */
/* Monitoring                                                          */
/* ------------------------------------------------------------------ */

function forestTable(label: string, rows: ForestRow[]): string {
  const parts: string[] = [
    `<table class="forest" data-model="${esc(label)}">`,
    `<caption>${esc(label)}</caption>`,
    "<thead><tr><th>term</th><th>estimate</th>" +
      "<th>interval</th></tr></thead><tbody>",
  ];
  for (const row of rows) {
    parts.push(
      `<tr data-label="${esc(row.label)}">` +
        `<td>${esc(row.label)}</td>` +
        `<td>${valueSpan(row.point, 3)}</td>` +
        `<td>[${valueSpan(row.low, 3)}, ${valueSpan(row.high, 3)}]</td>` +
        "</tr>",
    );
  }
  parts.push("</tbody></table>");
  return parts.join("\n");
}

function scatterSvg(payload: MonitorPayload): string {
  const pts = payload.scatter.points;
  const line = payload.scatter.line;
  const effects = payload.effects.centres;
  const W = 520;
  const H = 320;
  const M = 42;

  const xsLo = pts.map((p) => p.x - p.se_x);
  const xsHi = pts.map((p) => p.x + p.se_x);
  const xMinData = Math.min(...xsLo);
  const xMaxData = Math.max(...xsHi);
  const padX = 0.08 * (xMaxData - xMinData || 1);
  const xMin = xMinData - padX;
  const xMax = xMaxData + padX;

  const lineY = [
    line.intercept + line.slope * xMin,
    line.intercept + line.slope * xMax,
  ];
  const ysLo = pts.map((p) => p.y - p.se_y);
  const ysHi = pts.map((p) => p.y + p.se_y);
  const yMinData = Math.min(...ysLo, ...lineY);
  const yMaxData = Math.max(...ysHi, ...lineY);
  const padY = 0.08 * (yMaxData - yMinData || 1);
  const yMin = yMinData - padY;
  const yMax = yMaxData + padY;

  const toX = (v: number) => M + ((v - xMin) / (xMax - xMin)) * (W - 2 * M);
  const toY = (v: number) =>
    H - M - ((v - yMin) / (yMax - yMin)) * (H - 2 * M);

  const parts: string[] = [];
  parts.push(
    `<svg class="funnel" viewBox="0 0 ${W} ${H}" ` +
      'xmlns="http://www.w3.org/2000/svg" role="img">',
  );
  parts.push(
    `<rect class="frame" x="${M}" y="${M}" width="${W - 2 * M}" ` +
      `height="${H - 2 * M}" fill="none"/>`,
  );
  if (yMin < 0 && yMax > 0) {
    parts.push(
      `<line class="axis-zero" x1="${M}" y1="${px(toY(0))}" ` +
        `x2="${W - M}" y2="${px(toY(0))}"/>`,
    );
  }
  parts.push(
    '<line class="egger-line" ' +
      `x1="${px(toX(xMin))}" y1="${px(toY(lineY[0]!))}" ` +
      `x2="${px(toX(xMax))}" y2="${px(toY(lineY[1]!))}"/>`,
  );
  pts.forEach((p, i) => {
    const cx = toX(p.x);
    const cy = toY(p.y);
    const eff = effects.length === pts.length ? effects[i] : undefined;
    const alpha = eff ? eff.alpha : p.x;
    const beta = eff ? eff.beta : p.y;
    const se = eff ? eff.se_beta : p.se_y;
    parts.push(`<g class="centre-point" data-centre="${esc(p.centre)}">`);
    parts.push(
      `<title>${esc(p.centre)}: alpha=${esc(String(alpha))}, ` +
        `beta=${esc(String(beta))}, se=${esc(String(se))}</title>`,
    );
    parts.push(
      '<line class="errbar errbar-x" ' +
        `x1="${px(toX(p.x - p.se_x))}" y1="${px(cy)}" ` +
        `x2="${px(toX(p.x + p.se_x))}" y2="${px(cy)}"/>`,
    );
    parts.push(
      '<line class="errbar errbar-y" ' +
        `x1="${px(cx)}" y1="${px(toY(p.y - p.se_y))}" ` +
        `x2="${px(cx)}" y2="${px(toY(p.y + p.se_y))}"/>`,
    );
    parts.push(
      `<circle class="pt" cx="${px(cx)}" cy="${px(cy)}" r="4.5" ` +
        `data-x="${esc(String(p.x))}" data-y="${esc(String(p.y))}"/>`,
    );
    parts.push("</g>");
  });
  parts.push("</svg>");
  return parts.join("\n");
}

export function renderMonitor(payload: MonitorPayload): string {
  const parts: string[] = ['<section class="monitor">'];
  const pts = payload.scatter.points;
  if (pts.length < 2) {
    parts.push(
      `<p class="empty" data-points="${pts.length}">` +
        "only one centre contributes an effect estimate after excluding " +
        "the reference; a reluctance&ndash;effect line needs at least two " +
        "centres, so no trend is drawn.</p>",
    );
    parts.push("</section>");
    return parts.join("\n");
  }
  parts.push('<dl class="stats">');
  parts.push(
    `<dt>egger slope</dt><dd>${valueSpan(payload.egger.slope, 4)} ` +
      `(se ${valueSpan(payload.egger.se_slope, 4)})</dd>`,
  );
  parts.push(
    `<dt>egger intercept</dt><dd>${valueSpan(payload.egger.intercept, 4)} ` +
      `(se ${valueSpan(payload.egger.se_intercept, 4)})</dd>`,
  );
  parts.push(
    `<dt>centres</dt><dd>${valueSpan(payload.egger.n_centres)}</dd>`,
  );
  parts.push(
    `<dt>weighting</dt><dd>${valueSpan(payload.egger.weighting)}</dd>`,
  );
  parts.push(
    "<dt>reference centre</dt><dd>" +
      valueSpan(payload.scatter.reference) +
      "</dd>",
  );
  parts.push("</dl>");
  parts.push(`<p class="caveat">${esc(payload.egger.caveat)}</p>`);
  parts.push(`<p class="transform">${esc(payload.scatter.transform)}</p>`);
  parts.push(scatterSvg(payload));
  parts.push(forestTable("outcome model", payload.forest.outcome_model));
  parts.push(forestTable("treatment model", payload.forest.treatment_model));
  parts.push("</section>");
  return parts.join("\n");
}

/* ------------------------------------------------------------------ */
/* Chrome                                                              */
/* ------------------------------------------------------------------ */

export function renderSchema(payload: SchemaPayload): string {
  const parts: string[] = [
    '<table class="schema">',
    "<thead><tr><th>column</th><th>type</th><th>role</th>" +
      "</tr></thead><tbody>",
  ];
  for (const col of payload.columns) {
    parts.push(
      `<tr data-column="${esc(col.name)}"><td>${esc(col.name)}</td>` +
        `<td>${esc(col.type)}</td><td>${esc(col.role)}</td></tr>`,
    );
  }
  parts.push("</tbody></table>");
  return parts.join("\n");
}

export function renderError(err: ErrorPayload): string {
  const pos =
    err.position === undefined
      ? ""
      : ` <span class="error-pos" data-value="${esc(String(err.position))}">` +
        `(position ${esc(String(err.position))})</span>`;
  return (
    `<div class="error-banner" role="alert">${esc(err.error)}${pos}</div>`
  );
}

export function renderHistory(entries: readonly HistoryEntry[]): string {
  const parts: string[] = ['<ol class="history">'];
  for (const entry of entries) {
    parts.push(
      `<li data-hash="${esc(entry.hash)}">` +
        `<code>${esc(entry.panel)}#${entry.seq}</code> ` +
        `<span class="hash">${esc(entry.hash)}</span> ` +
        `<span class="query">${esc(entry.query)}</span></li>`,
    );
  }
  parts.push("</ol>");
  return parts.join("\n");
}
