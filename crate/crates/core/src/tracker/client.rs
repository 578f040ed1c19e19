use super::protocol::{self, Reply, SubscribeRequest, STATUS_OK};
use super::{GazeFrame, Result, TrackerError};
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};

/// Blocking push-mode client. Yields frames in the order the server sent them;
/// after the first protocol error the connection is closed and the stream ends.
pub struct TrackerClient {
    reader: BufReader<TcpStream>,
    line_no: usize,
    closed: bool,
}

impl TrackerClient {
    pub fn connect(addr: impl ToSocketAddrs + std::fmt::Debug) -> Result<Self> {
        let stream =
            TcpStream::connect(&addr).map_err(|source| TrackerError::Connect { addr: format!("{addr:?}"), source })?;
        stream.set_nodelay(true)?;
        let mut writer = stream.try_clone()?;
        writer.write_all(protocol::to_line(&SubscribeRequest::push()).as_bytes())?;
        writer.flush()?;

        let mut client = TrackerClient { reader: BufReader::new(stream), line_no: 0, closed: false };
        let line = client.read_line()?.ok_or(TrackerError::NoAck)?;
        let reply: Reply = client.parse(&line)?;
        if reply.statuscode != STATUS_OK || reply.values.is_some() {
            return Err(client.fail(&line, "expected subscription acknowledgement"));
        }
        Ok(client)
    }

    /// Socket handle that another thread can `shutdown` to end a blocked
    /// [`next_frame`](Self::next_frame).
    pub fn shutdown_handle(&self) -> Result<TcpStream> {
        Ok(self.reader.get_ref().try_clone()?)
    }

    fn read_line(&mut self) -> Result<Option<String>> {
        let mut line = String::new();
        loop {
            line.clear();
            if self.reader.read_line(&mut line)? == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if !trimmed.is_empty() {
                return Ok(Some(trimmed.to_string()));
            }
        }
    }

    fn fail(&mut self, line: &str, reason: impl Into<String>) -> TrackerError {
        self.close();
        TrackerError::Protocol { line_no: self.line_no, line: line.to_string(), reason: reason.into() }
    }

    fn parse(&mut self, line: &str) -> Result<Reply> {
        serde_json::from_str(line).map_err(|e| self.fail(line, e.to_string()))
    }

    fn close(&mut self) {
        if !self.closed {
            self.closed = true;
            let _ = self.reader.get_ref().shutdown(std::net::Shutdown::Both);
        }
    }

    /// Next frame, `Ok(None)` once the server has closed the stream.
    pub fn next_frame(&mut self) -> Result<Option<GazeFrame>> {
        if self.closed {
            return Ok(None);
        }
        let Some(line) = self.read_line()? else {
            self.close();
            return Ok(None);
        };
        let reply = self.parse(&line)?;
        if reply.statuscode != STATUS_OK {
            return Err(self.fail(&line, format!("status code {}", reply.statuscode)));
        }
        match reply.values {
            Some(values) => Ok(Some(GazeFrame::from(&values.frame))),
            None => Err(self.fail(&line, "message carries no frame")),
        }
    }
}

impl Iterator for TrackerClient {
    type Item = Result<GazeFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

impl Drop for TrackerClient {
    fn drop(&mut self) {
        self.close();
    }
}
