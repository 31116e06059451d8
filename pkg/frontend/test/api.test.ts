import { describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { countsToUnit, unitToCounts } from "../src/scale.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("scale conversion", () => {
  it("round-trips counts through the unit scale exactly", () => {
    for (const counts of [0, 1, 7, 40, 99, 100]) {
      expect(unitToCounts(countsToUnit(counts))).toBeCloseTo(counts, 12);
    }
  });
});

describe("api client boundary", () => {
  it("converts slider counts to [0, 1] exactly once in preview", async () => {
    const seen: string[] = [];
    const fetchImpl = vi.fn(async (url: string) => {
      seen.push(url);
      return jsonResponse(200, { schema_version: 1, density_grid: [] });
    });
    const client = new ApiClient("http://api", "tok", fetchImpl);
    await client.preview({ lower: 1, mode: 7, upper: 40, arm: "high", round: 1 });
    const url = new URL(seen[0]!);
    expect(url.searchParams.get("lower")).toBe("0.01");
    expect(url.searchParams.get("mode")).toBe("0.07");
    expect(url.searchParams.get("upper")).toBe("0.4");
  });

  it("submits probabilities, not counts", async () => {
    let body: any = null;
    const fetchImpl = vi.fn(async (_url: string, init?: RequestInit) => {
      body = JSON.parse(String(init?.body));
      return jsonResponse(200, { schema_version: 1 });
    });
    const client = new ApiClient("http://api", "tok", fetchImpl);
    await client.submit("w", { lower: 2, mode: 8, upper: 25, arm: "low", round: 2 });
    expect(body).toMatchObject({ round: 2, arm: "low", lower: 0.02, mode: 0.08, upper: 0.25 });
  });

  it("sends the bearer token on every call", async () => {
    let auth: string | undefined;
    const fetchImpl = vi.fn(async (_url: string, init?: RequestInit) => {
      auth = (init?.headers as Record<string, string>)["Authorization"];
      return jsonResponse(200, {});
    });
    const client = new ApiClient("http://api", "secret-token", fetchImpl);
    await client.descriptor("w");
    expect(auth).toBe("Bearer secret-token");
  });

  it("advance carries the expected state and surfaces 409 payloads", async () => {
    const fetchImpl = vi.fn(async (_url: string, init?: RequestInit) => {
      const body = JSON.parse(String(init?.body));
      expect(body.expected_state).toBe("ROUND1_OPEN");
      return jsonResponse(409, { detail: { error: "UnexpectedState", state: "DISCUSSION" } });
    });
    const client = new ApiClient("http://api", "tok", fetchImpl);
    const err = await client.advance("w", "ROUND1_OPEN").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
    expect(((err as ApiError).payload as any).detail.state).toBe("DISCUSSION");
  });

  it("boxplots hit the round- and arm-scoped path", async () => {
    const seen: string[] = [];
    const fetchImpl = vi.fn(async (url: string) => {
      seen.push(url);
      return jsonResponse(200, { schema_version: 1, boxplots: [] });
    });
    const client = new ApiClient("http://api", "tok", fetchImpl);
    await client.boxplots("w", 1, "high");
    expect(seen[0]).toBe("http://api/sessions/w/rounds/1/boxplots?arm=high");
  });
});
