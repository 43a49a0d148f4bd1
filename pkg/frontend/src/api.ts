import type {
  AnnotationApi,
  BenchmarkManifest,
  DecisionPayload,
  NextTaskResponse,
  PostAggregate,
  ScorePayload,
} from "./types.js";

/** Server failures carry the {"error": {code, message}} envelope. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient implements AnnotationApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, "NetworkError", String(err));
    }
    const body = await resp.json().catch(() => null);
    if (!resp.ok) {
      const error = (body as { error?: { code?: string; message?: string } } | null)?.error;
      throw new ApiError(resp.status, error?.code ?? "HttpError",
        error?.message ?? `request failed with status ${resp.status}`);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  nextTask(annotatorId: string): Promise<NextTaskResponse> {
    return this.request(`/api/tasks/next?annotator=${encodeURIComponent(annotatorId)}`);
  }

  submitScore(payload: ScorePayload): Promise<unknown> {
    return this.post("/api/scores", payload);
  }

  reviewQueue(): Promise<{ queue: PostAggregate[] }> {
    return this.request("/api/review/queue");
  }

  submitDecision(payload: DecisionPayload): Promise<unknown> {
    return this.post("/api/review/decision", payload);
  }

  benchmarkManifest(): Promise<BenchmarkManifest> {
    return this.request("/api/benchmark/manifest");
  }
}
