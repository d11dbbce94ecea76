/** Session bookkeeping: request sequencing and the append-only history.
 *
 * Each panel issues monotonically increasing request sequence numbers and
 * applies a response only when it belongs to the most recently issued
 * request; anything older is stale and discarded, so out-of-order network
 * deliveries can never paint the screen with superseded results.
 *
 * Every applied response is appended to a history whose entries carry a
 * stable content hash, which makes a figure traceable back to the exact
 * response bytes that produced it.
 */

/** Canonical JSON: object keys sorted, no whitespace. */
export function stableStringify(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(stableStringify).join(",") + "]";
  }
  const obj = value as Record<string, unknown>;
  const keys = Object.keys(obj).sort();
  const parts = keys.map(
    (k) => JSON.stringify(k) + ":" + stableStringify(obj[k]),
  );
  return "{" + parts.join(",") + "}";
}

/** FNV-1a (32-bit) over the canonical JSON form, as 8 hex digits. */
export function responseHash(payload: unknown): string {
  const text = stableStringify(payload);
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash.toString(16).padStart(8, "0");
}

export type PanelName =
  | "identify"
  | "positivity"
  | "match"
  | "monitor"
  | "schema"
  | "dag";

export interface HistoryEntry {
  readonly panel: PanelName;
  readonly seq: number;
  readonly query: string;
  readonly hash: string;
}

/** One cockpit panel: at most one in-flight request at a time. */
export class Panel<T> {
  private issued = 0;
  private applied = 0;
  private payload: T | null = null;

  /** Reserve the next sequence number before sending a request. */
  issue(): number {
    this.issued += 1;
    return this.issued;
  }

  /**
   * Offer a response for request `seq`. Returns true when applied; a
   * response for anything but the latest issued request is stale and
   * leaves the panel untouched.
   */
  deliver(seq: number, payload: T): boolean {
    if (seq !== this.issued) {
      return false;
    }
    this.applied = seq;
    this.payload = payload;
    return true;
  }

  /** The payload currently on screen, if any. */
  get current(): T | null {
    return this.payload;
  }

  /** Sequence number of the most recently issued request. */
  get latestIssued(): number {
    return this.issued;
  }

  /** Sequence number of the response currently applied. */
  get appliedSeq(): number {
    return this.applied;
  }

  /** True while a request newer than the applied response is pending. */
  get inFlight(): boolean {
    return this.issued > this.applied;
  }
}

export class SessionState {
  private readonly entries: HistoryEntry[] = [];

  /** Record an applied response; returns the immutable entry. */
  record(panel: PanelName, seq: number, query: unknown, payload: unknown): HistoryEntry {
    const entry: HistoryEntry = Object.freeze({
      panel,
      seq,
      query: stableStringify(query),
      hash: responseHash(payload),
    });
    this.entries.push(entry);
    return entry;
  }

  /** Snapshot of the history; the internal log is append-only. */
  get history(): readonly HistoryEntry[] {
    return this.entries.slice();
  }

  get length(): number {
    return this.entries.length;
  }

  /**
   * Replay check: does `payload` hash to the same content the entry was
   * recorded from? Used to verify a re-issued query reproduced the figure.
   */
  replayMatches(entry: HistoryEntry, payload: unknown): boolean {
    return responseHash(payload) === entry.hash;
  }
}
