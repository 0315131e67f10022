// Wire types, mirroring the gateway's documented JSON schemas exactly.
// The client never computes speed or classification; it renders these
// fields verbatim.

export type Classification = "success" | "erroneous" | "systemFailure";

export interface TrialMessage {
    type: "gait_speed";
    epc: string;
    label: string;
    tStartUs: number | null;
    tEndUs: number | null;
    speedMps: number;
    classification: Classification;
    entrySamples: number;
    exitSamples: number;
    completedAt: string; // RFC 3339
    params: DetectionParams;
}

export interface HeartbeatMessage {
    type: "heartbeat";
    ts: number;
}

export type ResultsMessage = TrialMessage | HeartbeatMessage;

export interface DetectionParams {
    w1: number;
    w2: number;
    tau1: number;
    tau2: number;
    distanceM: number;
}

export interface Tag {
    label: string;
    epc: string;
}

export interface ServiceConfig {
    schemaVersion: number;
    params: DetectionParams;
    portRoles: Record<string, string>;
    cooldownS: number;
    idleTimeoutS: number;
}

export function isTrialMessage(m: ResultsMessage): m is TrialMessage {
    return m.type === "gait_speed";
}
