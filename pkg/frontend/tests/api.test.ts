/** Client transport tests with an injected fake fetch. */

import { describe, expect, it } from "vitest";

import { ApiClient, ServiceError, type FetchLike } from "../src/api.js";

interface Call {
  url: string;
  method?: string;
  body?: string;
  headers?: Record<string, string>;
}

function fakeFetch(
  status: number,
  payload: unknown,
): { fetch: FetchLike; calls: Call[] } {
  const calls: Call[] = [];
  const fetch: FetchLike = (url, init) => {
    calls.push({
      url,
      method: init?.method,
      body: init?.body,
      headers: init?.headers,
    });
    return Promise.resolve({
      ok: status >= 200 && status < 300,
      status,
      json: () => Promise.resolve(payload),
    });
  };
  return { fetch, calls };
}

describe("api client", () => {
  it("posts JSON bodies to the right endpoint", async () => {
    const { fetch, calls } = fakeFetch(200, { status: "Identified" });
    const client = new ApiClient("http://localhost:8000/", fetch);
    await client.identify({ x: "EVD", y: "Outcome", latent: ["U"] });
    expect(calls).toHaveLength(1);
    expect(calls[0]!.url).toBe("http://localhost:8000/identify");
    expect(calls[0]!.method).toBe("POST");
    expect(calls[0]!.headers).toEqual({
      "content-type": "application/json",
    });
    expect(JSON.parse(calls[0]!.body!)).toEqual({
      x: "EVD",
      y: "Outcome",
      latent: ["U"],
    });
  });

  it("issues plain GETs for schema and dag", async () => {
    const { fetch, calls } = fakeFetch(200, { columns: [] });
    const client = new ApiClient("", fetch);
    await client.schema();
    expect(calls[0]!.url).toBe("/schema");
    expect(calls[0]!.body).toBeUndefined();
  });

  it("raises a typed error carrying the service's message", async () => {
    const body = { error: "at position 5: expected a literal", position: 5 };
    const { fetch } = fakeFetch(400, body);
    const client = new ApiClient("", fetch);
    const err = await client
      .positivity({ filter: "age >" })
      .then(() => null)
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ServiceError);
    const service = err as ServiceError;
    expect(service.status).toBe(400);
    expect(service.payload.position).toBe(5);
    expect(service.message).toContain("expected a literal");
  });
});
