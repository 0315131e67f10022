// Thin REST client over the gateway's documented endpoints.

import { DetectionParams, ServiceConfig, Tag, TrialMessage } from "./types.js";

type FetchLike = typeof fetch;

export class ApiError extends Error {
    constructor(
        readonly status: number,
        readonly detail: string,
    ) {
        super(`HTTP ${status}: ${detail}`);
    }
}

export class ApiClient {
    constructor(
        private readonly baseUrl: string = "",
        private readonly fetchImpl: FetchLike = fetch,
    ) {}

    async getTags(): Promise<Tag[]> {
        const body = await this.request("GET", "/api/tags");
        return body.tags as Tag[];
    }

    async getTrials(limit = 50): Promise<TrialMessage[]> {
        const body = await this.request("GET", `/api/trials?limit=${limit}`);
        return body.trials as TrialMessage[];
    }

    async getConfig(): Promise<ServiceConfig> {
        return (await this.request("GET", "/api/config")) as ServiceConfig;
    }

    async putParams(params: DetectionParams): Promise<ServiceConfig> {
        return (await this.request("PUT", "/api/config", {
            params,
        })) as ServiceConfig;
    }

    private async request(
        method: string,
        path: string,
        body?: unknown,
    ): Promise<any> {
        const response = await this.fetchImpl(this.baseUrl + path, {
            method,
            headers:
                body === undefined
                    ? undefined
                    : { "content-type": "application/json" },
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        if (!response.ok) {
            let detail = response.statusText;
            try {
                detail = (await response.json()).detail ?? detail;
            } catch {
                // non-JSON error body; keep the status text
            }
            throw new ApiError(response.status, detail);
        }
        return response.json();
    }
}
