/** Browser wiring: binds the panels to the service client.
 *
 * Each panel keeps at most one in-flight request; responses are applied
 * through the panel's sequence check so a slow earlier reply can never
 * overwrite a newer figure. Errors render as an inline banner next to the
 * panel and leave the current figure untouched.
 */

import { ApiClient, ServiceError } from "./api.js";
import {
  renderDag,
  renderError,
  renderHistory,
  renderIdentify,
  renderMatch,
  renderMonitor,
  renderPositivity,
  renderSchema,
} from "./render.js";
import { Panel, SessionState, type PanelName } from "./session.js";
import type {
  DagPayload,
  IdentifyPayload,
  MatchPayload,
  MonitorPayload,
  PositivityPayload,
} from "./types.js";

interface Slots {
  figure: HTMLElement;
  error: HTMLElement;
}

function slots(root: HTMLElement, name: string): Slots {
  const figure = root.querySelector<HTMLElement>(`[data-figure="${name}"]`);
  const error = root.querySelector<HTMLElement>(`[data-error="${name}"]`);
  if (!figure || !error) {
    throw new Error(`missing containers for panel ${name}`);
  }
  return { figure, error };
}

function inputValue(root: HTMLElement, id: string): string {
  const el = root.querySelector<HTMLInputElement>(`#${id}`);
  return el ? el.value.trim() : "";
}

function splitList(text: string): string[] {
  return text
    .split(",")
    .map((s) => s.trim())
    .filter((s) => s.length > 0);
}

export function mountCockpit(root: HTMLElement, client: ApiClient): void {
  const session = new SessionState();
  const historyBox = root.querySelector<HTMLElement>("[data-history]");

  const panels = {
    identify: new Panel<IdentifyPayload>(),
    positivity: new Panel<PositivityPayload>(),
    match: new Panel<MatchPayload>(),
    monitor: new Panel<MonitorPayload>(),
  };

  let dagPayload: DagPayload | null = null;

  const refreshHistory = () => {
    if (historyBox) historyBox.innerHTML = renderHistory(session.history);
  };

  async function run<T>(
    name: PanelName & keyof typeof panels,
    where: Slots,
    query: unknown,
    call: () => Promise<T>,
    paint: (payload: T) => string,
  ): Promise<void> {
    const panel = panels[name] as Panel<T>;
    const seq = panel.issue();
    try {
      const payload = await call();
      if (!panel.deliver(seq, payload)) {
        return; // superseded by a newer request
      }
      where.error.innerHTML = "";
      where.figure.innerHTML = paint(payload);
      session.record(name, seq, query, payload);
      refreshHistory();
    } catch (err) {
      if (seq !== panel.latestIssued) {
        return; // stale failure; a newer request owns the panel
      }
      const body =
        err instanceof ServiceError
          ? err.payload
          : { error: err instanceof Error ? err.message : String(err) };
      where.error.innerHTML = renderError(body);
    }
  }

  // Static context: dataset schema and the study graph.
  const schemaBox = root.querySelector<HTMLElement>("[data-figure=schema]");
  if (schemaBox) {
    client
      .schema()
      .then((payload) => {
        schemaBox.innerHTML = renderSchema(payload);
      })
      .catch(() => {
        schemaBox.innerHTML = renderError({ error: "no tabular data loaded" });
      });
  }
  const dagBox = root.querySelector<HTMLElement>("[data-figure=dag]");
  if (dagBox) {
    client
      .dag()
      .then((payload) => {
        dagPayload = payload;
        dagBox.innerHTML = renderDag(payload);
      })
      .catch(() => {
        dagBox.innerHTML = renderError({ error: "no graph loaded" });
      });
  }

  root
    .querySelector<HTMLButtonElement>("#run-identify")
    ?.addEventListener("click", () => {
      const req = {
        x: inputValue(root, "identify-x"),
        y: inputValue(root, "identify-y"),
        latent: splitList(inputValue(root, "identify-latent")),
      };
      const where = slots(root, "identify");
      void run("identify", where, req, () => client.identify(req), (p) => {
        const graph = dagPayload ? renderDag(dagPayload, p) : "";
        return graph + renderIdentify(p);
      });
    });

  root
    .querySelector<HTMLButtonElement>("#run-positivity")
    ?.addEventListener("click", () => {
      const filter = inputValue(root, "positivity-filter");
      const req = {
        covariates: splitList(inputValue(root, "positivity-covariates")),
        ...(filter ? { filter } : {}),
      };
      const where = slots(root, "positivity");
      void run(
        "positivity",
        where,
        req,
        () => client.positivity(req),
        renderPositivity,
      );
    });

  root
    .querySelector<HTMLButtonElement>("#run-match")
    ?.addEventListener("click", () => {
      const rct = inputValue(root, "match-rct-n");
      const seed = inputValue(root, "match-seed");
      const req = {
        covariates: splitList(inputValue(root, "match-covariates")),
        ...(rct ? { rct_n: Number(rct) } : {}),
        ...(seed ? { seed: Number(seed) } : {}),
      };
      const where = slots(root, "match");
      void run("match", where, req, () => client.match(req), renderMatch);
    });

  root
    .querySelector<HTMLButtonElement>("#run-monitor")
    ?.addEventListener("click", () => {
      const anonBox = root.querySelector<HTMLInputElement>(
        "#monitor-anonymize",
      );
      const req = { anonymize: anonBox ? anonBox.checked : false };
      const where = slots(root, "monitor");
      void run(
        "monitor",
        where,
        req,
        () => client.monitor(req),
        renderMonitor,
      );
    });
}

declare const document: Document | undefined;

if (typeof document !== "undefined") {
  const root = document.getElementById("cockpit");
  if (root) {
    mountCockpit(root, new ApiClient(""));
  }
}
