// Pure view-model reducer. Rendering is a function of the message stream
// plus REST snapshots; replaying the same events always yields the same
// state, which the tests verify by snapshot-diffing a recorded log.

import {
    ResultsMessage,
    ServiceConfig,
    Tag,
    TrialMessage,
    isTrialMessage,
} from "./types.js";

export type ConnectionState = "connecting" | "live" | "stale" | "disconnected";

export interface TagStatus {
    tag: Tag;
    lastResult: TrialMessage | null;
}

export interface ViewModel {
    connection: ConnectionState;
    tags: TagStatus[];
    history: TrialMessage[];
    config: ServiceConfig | null;
    configError: string | null;
    trialCount: number;
}

export const HISTORY_LIMIT = 200;

export type ViewEvent =
    | { kind: "socket-open" }
    | { kind: "socket-closed" }
    | { kind: "socket-stale" }
    | { kind: "message"; message: ResultsMessage }
    | { kind: "tags-loaded"; tags: Tag[] }
    | { kind: "history-loaded"; trials: TrialMessage[] }
    | { kind: "config-loaded"; config: ServiceConfig }
    | { kind: "config-rejected"; detail: string };

export function initialViewModel(): ViewModel {
    return {
        connection: "connecting",
        tags: [],
        history: [],
        config: null,
        configError: null,
        trialCount: 0,
    };
}

export function reduce(state: ViewModel, event: ViewEvent): ViewModel {
    switch (event.kind) {
        case "socket-open":
            return { ...state, connection: "live" };
        case "socket-closed":
            return { ...state, connection: "disconnected" };
        case "socket-stale":
            return state.connection === "live"
                ? { ...state, connection: "stale" }
                : state;
        case "message":
            return applyMessage(state, event.message);
        case "tags-loaded":
            return { ...state, tags: mergeTags(state, event.tags) };
        case "history-loaded":
            return { ...state, history: event.trials.slice(0, HISTORY_LIMIT) };
        case "config-loaded":
            return { ...state, config: event.config, configError: null };
        case "config-rejected":
            return { ...state, configError: event.detail };
    }
}

function applyMessage(state: ViewModel, message: ResultsMessage): ViewModel {
    if (!isTrialMessage(message)) {
        // heartbeat: proof of liveness
        return state.connection === "live"
            ? state
            : { ...state, connection: "live" };
    }
    const history = [message, ...state.history].slice(0, HISTORY_LIMIT);
    const tags = state.tags.map((entry) =>
        entry.tag.epc === message.epc
            ? { ...entry, lastResult: message }
            : entry,
    );
    return {
        ...state,
        connection: "live",
        history,
        tags,
        trialCount: state.trialCount + 1,
    };
}

function mergeTags(state: ViewModel, tags: Tag[]): TagStatus[] {
    const previous = new Map(
        state.tags.map((entry) => [entry.tag.epc, entry.lastResult]),
    );
    return tags.map((tag) => ({
        tag,
        lastResult: previous.get(tag.epc) ?? null,
    }));
}
