// Reconnecting client for the /ws/results push channel.
//
// The server sends heartbeats every 15 s when idle and expects any client
// frame back as a pong. The client replies to every heartbeat, marks the
// connection stale when nothing arrives for over two heartbeat intervals,
// and reconnects with capped exponential backoff.

import { ResultsMessage } from "./types.js";

export interface SocketLike {
    onopen: (() => void) | null;
    onclose: (() => void) | null;
    onmessage: ((event: { data: string }) => void) | null;
    send(data: string): void;
    close(): void;
}

export interface ResultsSocketOptions {
    url: string;
    onMessage: (message: ResultsMessage) => void;
    onStateChange: (state: "open" | "closed" | "stale") => void;
    socketFactory?: (url: string) => SocketLike;
    setTimer?: (fn: () => void, ms: number) => unknown;
    clearTimer?: (handle: unknown) => void;
    heartbeatIntervalMs?: number;
}

export const BASE_BACKOFF_MS = 1000;
export const MAX_BACKOFF_MS = 30000;

export class ResultsSocket {
    private socket: SocketLike | null = null;
    private attempts = 0;
    private staleTimer: unknown = null;
    private stopped = false;

    private readonly factory: (url: string) => SocketLike;
    private readonly setTimer: (fn: () => void, ms: number) => unknown;
    private readonly clearTimer: (handle: unknown) => void;
    private readonly staleAfterMs: number;

    constructor(private readonly options: ResultsSocketOptions) {
        this.factory =
            options.socketFactory ??
            ((url) => new WebSocket(url) as unknown as SocketLike);
        this.setTimer = options.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
        this.clearTimer =
            options.clearTimer ?? ((handle) => clearTimeout(handle as number));
        const interval = options.heartbeatIntervalMs ?? 15000;
        this.staleAfterMs = 2 * interval + 1000;
    }

    connect(): void {
        this.stopped = false;
        this.open();
    }

    close(): void {
        this.stopped = true;
        this.cancelStaleTimer();
        this.socket?.close();
        this.socket = null;
    }

    backoffMs(attempt: number): number {
        return Math.min(BASE_BACKOFF_MS * 2 ** attempt, MAX_BACKOFF_MS);
    }

    private open(): void {
        const socket = this.factory(this.options.url);
        this.socket = socket;

        socket.onopen = () => {
            this.attempts = 0;
            this.armStaleTimer();
            this.options.onStateChange("open");
        };

        socket.onmessage = (event) => {
            let message: ResultsMessage;
            try {
                message = JSON.parse(event.data) as ResultsMessage;
            } catch {
                return; // ignore malformed frames
            }
            this.armStaleTimer();
            if (message.type === "heartbeat") {
                socket.send("pong");
            }
            this.options.onMessage(message);
        };

        socket.onclose = () => {
            this.cancelStaleTimer();
            this.options.onStateChange("closed");
            if (this.stopped) {
                return;
            }
            const delay = this.backoffMs(this.attempts);
            this.attempts += 1;
            this.setTimer(() => this.open(), delay);
        };
    }

    private armStaleTimer(): void {
        this.cancelStaleTimer();
        this.staleTimer = this.setTimer(() => {
            this.options.onStateChange("stale");
        }, this.staleAfterMs);
    }

    private cancelStaleTimer(): void {
        if (this.staleTimer !== null) {
            this.clearTimer(this.staleTimer);
            this.staleTimer = null;
        }
    }
}
